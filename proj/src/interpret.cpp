#include "conn/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "conn/diff.hpp"
#include "conn/train.hpp"

namespace conn::interpret {

RelevanceProblem::RelevanceProblem(const ModelParams& p, Vec mu_theta, std::vector<std::uint32_t> candidates)
    : theta_layers_(p.theta_layers), mu_theta_(std::move(mu_theta)), candidates_(std::move(candidates)) {
  if (candidates_.empty()) throw InterpretError("candidate word set is empty");
  const auto D = p.embedding.cols();
  if (mu_theta_.size() != D) throw InterpretError("target embedding has the wrong dimension");
  const Vec injected = p.feedback * mu_theta_;
  word_embeddings_.resize(D, static_cast<Eigen::Index>(candidates_.size()));
  for (std::size_t c = 0; c < candidates_.size(); ++c) {
    if (candidates_[c] >= p.vocab_size())
      throw InterpretError("candidate word id " + std::to_string(candidates_[c]) + " is outside the vocabulary");
    const Vec row = p.embedding.row(candidates_[c]).transpose();
    word_embeddings_.col(static_cast<Eigen::Index>(c)) =
        model::normalize(model::run_stack(p.z_layers, row, &injected).last());
  }
}

Vec RelevanceProblem::residual(const Vec& f) const {
  if (f.size() != static_cast<Eigen::Index>(size())) throw InterpretError("weight vector has the wrong length");
  return model::normalize(model::run_stack(theta_layers_, word_embeddings_ * f).last()) - mu_theta_;
}

double RelevanceProblem::objective(const Vec& f) const { return residual(f).squaredNorm(); }

double RelevanceProblem::objective_and_gradient(const Vec& f, Vec& grad) const {
  if (f.size() != static_cast<Eigen::Index>(size())) throw InterpretError("weight vector has the wrong length");
  const Vec sum = word_embeddings_ * f;
  const model::StackTrace trace = model::run_stack(theta_layers_, sum);
  const Vec r = model::normalize(trace.last()) - mu_theta_;

  Vec g = diff::normalize_backward(trace.last(), 2.0 * r);
  for (std::size_t l = theta_layers_.size(); l-- > 0;) {
    const Vec da = g.cwiseProduct((1.0 - trace.out[l].array().square()).matrix());
    g = theta_layers_[l].transpose() * da;
  }
  grad = word_embeddings_.transpose() * g;
  return r.squaredNorm();
}

long double RelevanceProblem::reference_objective(const std::vector<long double>& f) const {
  using LD = long double;
  const std::size_t D = static_cast<std::size_t>(mu_theta_.size());
  std::vector<LD> h(D, 0.0L);
  for (std::size_t c = 0; c < f.size(); ++c)
    for (std::size_t d = 0; d < D; ++d)
      h[d] += f[c] * static_cast<LD>(word_embeddings_(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(c)));
  for (const Mat& W : theta_layers_) {
    std::vector<LD> next(D, 0.0L);
    for (std::size_t r = 0; r < D; ++r) {
      LD a = 0.0L;
      for (std::size_t k = 0; k < D; ++k)
        a += static_cast<LD>(W(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k))) * h[k];
      next[r] = std::tanh(a);
    }
    h = std::move(next);
  }
  LD norm = 0.0L;
  for (LD x : h) norm += x * x;
  norm = std::sqrt(norm);
  LD obj = 0.0L;
  for (std::size_t d = 0; d < D; ++d) {
    const LD u = norm > static_cast<LD>(model::kNormEpsilon) ? h[d] / norm : 0.0L;
    const LD diff = u - static_cast<LD>(mu_theta_[static_cast<Eigen::Index>(d)]);
    obj += diff * diff;
  }
  return obj;
}

Vec residual(const Vec& f, const Vec& mu_theta, const ModelParams& p, const std::vector<std::uint32_t>& candidates) {
  return RelevanceProblem(p, mu_theta, candidates).residual(f);
}

RelevanceResult solve_relevance(const RelevanceProblem& problem, const SolveOptions& opt) {
  if (opt.steps < 1) throw InterpretError("steps must be >= 1");
  train::AdamConfig adam;
  adam.learning_rate = opt.learning_rate;
  adam.validate();

  const auto n = static_cast<Eigen::Index>(problem.size());
  Vec f = opt.init.size() == 0 ? Vec::Constant(n, 1.0 / static_cast<double>(n)) : opt.init;
  if (f.size() != n) throw InterpretError("initial weights have the wrong length");

  RelevanceResult res;
  Vec m = Vec::Zero(n), v = Vec::Zero(n), grad(n);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t step = 0;; ++step) {
    const double obj = problem.objective_and_gradient(f, grad);
    if (!std::isfinite(obj) || !grad.allFinite())
      throw InterpretError("relevance objective became non-finite at step " + std::to_string(step));
    res.trace.push_back(obj);
    if (step == 0) res.initial_objective = obj;
    if (obj < best) {
      best = obj;
      res.f = f;
      res.objective = obj;
    }
    if (step == opt.steps || obj <= opt.tol) break;
    const auto len = static_cast<std::size_t>(n);
    train::adam_update({f.data(), len}, {grad.data(), len}, {m.data(), len}, {v.data(), len}, step + 1, adam);
    res.iterations = step + 1;
  }
  return res;
}

Vec count_init(const Document& doc, const std::vector<std::uint32_t>& candidates) {
  Vec f = Vec::Zero(static_cast<Eigen::Index>(candidates.size()));
  for (auto w : doc.word_ids) {
    const auto it = std::find(candidates.begin(), candidates.end(), w);
    if (it != candidates.end()) f[it - candidates.begin()] += 1.0;
  }
  return f;
}

std::size_t nearest(const Vec& target, const std::vector<Vec>& embeddings) {
  if (embeddings.empty()) throw InterpretError("no embeddings to search");
  std::size_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    const double d = (embeddings[i] - target).squaredNorm();
    if (d < best_dist) {
      best_dist = d;
      best = i;
    }
  }
  return best;
}

std::vector<RankedWord> top_words(const Vec& f, const std::vector<std::uint32_t>& candidates,
                                  const Vocabulary& vocab, std::size_t n) {
  if (f.size() != static_cast<Eigen::Index>(candidates.size()))
    throw InterpretError("weights and candidates differ in length");
  if (n > candidates.size()) throw InterpretError("n exceeds the number of candidates");
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (f[static_cast<Eigen::Index>(a)] != f[static_cast<Eigen::Index>(b)])
      return f[static_cast<Eigen::Index>(a)] > f[static_cast<Eigen::Index>(b)];
    return candidates[a] < candidates[b];
  });
  std::vector<RankedWord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = order[i];
    out.push_back({c, candidates[c], vocab.token_of(candidates[c]), f[static_cast<Eigen::Index>(c)]});
  }
  return out;
}

double gradient_check(const RelevanceProblem& problem, const Vec& f, double eps) {
  Vec grad;
  problem.objective_and_gradient(f, grad);
  std::vector<long double> x(f.data(), f.data() + f.size());
  double worst = 0.0;
  for (std::size_t c = 0; c < x.size(); ++c) {
    const long double saved = x[c];
    x[c] = saved + eps;
    const long double plus = problem.reference_objective(x);
    x[c] = saved - eps;
    const long double minus = problem.reference_objective(x);
    x[c] = saved;
    const double numeric = static_cast<double>((plus - minus) / (2.0L * eps));
    worst = std::max(worst, diff::relative_error(grad[static_cast<Eigen::Index>(c)], numeric));
  }
  return worst;
}

}  // namespace conn::interpret
