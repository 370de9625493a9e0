#include "conn/diff.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace conn::diff {

using model::DropoutMasks;
using model::EmbeddingState;
using model::HyperParams;
using model::ModelParams;

Gradients Gradients::zeros_like(const model::ParamArrays& p, bool with_embedding) {
  Gradients g;
  if (with_embedding) g.embedding = Mat::Zero(p.embedding.rows(), p.embedding.cols());
  for (const auto& m : p.z_layers) g.z_layers.push_back(Mat::Zero(m.rows(), m.cols()));
  g.feedback = Mat::Zero(p.feedback.rows(), p.feedback.cols());
  for (const auto& m : p.theta_layers) g.theta_layers.push_back(Mat::Zero(m.rows(), m.cols()));
  g.head_weight = Mat::Zero(p.head_weight.rows(), p.head_weight.cols());
  g.head_bias = Vec::Zero(p.head_bias.size());
  return g;
}

// ---------------------------------------------------------------------------
// Loss

LossConfig LossConfig::for_classes(std::size_t num_classes) {
  LossConfig cfg;
  cfg.kind = num_classes == 2 ? LossKind::BinaryCrossEntropy : LossKind::CrossEntropy;
  return cfg;
}

double LossConfig::weight(int label) const {
  if (class_weights.empty()) return 1.0;
  return class_weights.at(static_cast<std::size_t>(label));
}

void LossConfig::validate(std::size_t num_classes) const {
  if (kind == LossKind::BinaryCrossEntropy && num_classes != 2)
    throw model::ModelError("binary cross-entropy needs exactly two classes");
  if (!class_weights.empty() && class_weights.size() != num_classes)
    throw model::ModelError("class_weights must have one entry per class");
  for (double w : class_weights)
    if (!(w > 0.0) || !std::isfinite(w)) throw model::ModelError("class weights must be positive");
}

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_label(const Vec& logits, int label, const LossConfig& cfg) {
  if (cfg.kind == LossKind::BinaryCrossEntropy) {
    if (logits.size() != 1) throw model::ModelError("binary cross-entropy expects a single logit");
    if (label != 0 && label != 1) throw model::ModelError("binary label must be 0 or 1");
  } else if (label < 0 || label >= logits.size()) {
    throw model::ModelError("label out of range");
  }
}

}  // namespace

double loss(const Vec& logits, int label, const LossConfig& cfg) {
  check_label(logits, label, cfg);
  const double w = cfg.weight(label);
  if (cfg.kind == LossKind::BinaryCrossEntropy) {
    const double x = logits[0];
    return w * (softplus(x) - (label == 1 ? x : 0.0));
  }
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  return w * (lse - logits[label]);
}

Vec loss_gradient(const Vec& logits, int label, const LossConfig& cfg) {
  check_label(logits, label, cfg);
  const double w = cfg.weight(label);
  if (cfg.kind == LossKind::BinaryCrossEntropy) {
    Vec g(1);
    g[0] = w * (sigmoid(logits[0]) - (label == 1 ? 1.0 : 0.0));
    return g;
  }
  Vec g = model::probabilities(logits);
  g[label] -= 1.0;
  return w * g;
}

// ---------------------------------------------------------------------------
// Reverse sweep

Vec normalize_backward(const Vec& v, const Vec& grad_out) {
  const double n = v.norm();
  if (!(n > model::kNormEpsilon)) return Vec::Zero(v.size());
  const Vec u = v / n;
  return (grad_out - u * u.dot(grad_out)) / n;
}

Vec stack_backward(const std::vector<Mat>& layers, const Vec& input, const model::StackTrace& trace,
                   const Vec& grad_out, std::vector<Mat>& layer_grads, Vec* first_pre_grad) {
  Vec g = grad_out;
  for (std::size_t l = layers.size(); l-- > 0;) {
    const Vec& out = trace.out[l];
    Vec da = g.cwiseProduct((1.0 - out.array().square()).matrix());
    const Vec& in = l == 0 ? input : trace.out[l - 1];
    layer_grads[l].noalias() += da * in.transpose();
    g = layers[l].transpose() * da;
    if (l == 0 && first_pre_grad != nullptr) *first_pre_grad = std::move(da);
  }
  return g;
}

namespace {

Vec masked(const std::vector<Vec>& masks, std::size_t i, const Vec& g) {
  if (i >= masks.size() || masks[i].size() == 0) return g;
  return masks[i].cwiseProduct(g);
}

}  // namespace

DocGradients backward_sparse(const EmbeddingState& state, const ModelParams& p, const HyperParams& hp,
                             int label, const LossConfig& cfg) {
  if (state.iterations.size() != hp.unroll || p.z_layers.size() != hp.depth_z ||
      p.theta_layers.size() != hp.depth_theta || p.embedding.cols() != static_cast<Eigen::Index>(hp.dim))
    throw model::ModelError("backward: state does not match parameters");
  const std::size_t N = state.word_ids.size();
  const auto D = static_cast<Eigen::Index>(hp.dim);

  DocGradients out;
  out.dense = Gradients::zeros_like(p, /*with_embedding=*/false);
  Gradients& G = out.dense;

  const Vec logits = model::classify(state.head_input(), p);
  out.loss = loss(logits, label, cfg);
  const Vec g_logits = loss_gradient(logits, label, cfg);
  G.head_weight.noalias() += g_logits * state.head_input().transpose();
  G.head_bias += g_logits;

  // Gradient w.r.t. the masked document embedding of the current iteration.
  Vec g_theta_masked = p.head_weight.transpose() * g_logits;
  std::vector<Vec> g_inputs(N, Vec::Zero(D));

  for (std::size_t t = hp.unroll; t-- > 0;) {
    const auto& it = state.iterations[t];
    const Vec g_mu_theta = masked(state.masks.theta, t, g_theta_masked);
    const Vec g_theta_out = normalize_backward(it.theta.last(), g_mu_theta);
    const Vec g_sum = stack_backward(p.theta_layers, it.z_sum, it.theta, g_theta_out, G.theta_layers);

    Vec g_feedback_term = Vec::Zero(D);
    const auto& z_masks = state.masks.z[t];
    Vec g_first_pre;
    for (std::size_t i = 0; i < N; ++i) {
      const Vec g_mu_z = masked(z_masks, i, g_sum);
      const Vec g_z_out = normalize_backward(it.z[i].last(), g_mu_z);
      g_inputs[i] += stack_backward(p.z_layers, state.word_inputs[i], it.z[i], g_z_out, G.z_layers,
                                    &g_first_pre);
      g_feedback_term += g_first_pre;
    }
    G.feedback.noalias() += g_feedback_term * it.feedback_in.transpose();
    if (t > 0) g_theta_masked = p.feedback.transpose() * g_feedback_term;
  }

  std::map<std::uint32_t, Vec> rows;
  for (std::size_t i = 0; i < N; ++i) {
    Vec g = masked(state.masks.word, i, g_inputs[i]);
    auto [pos, inserted] = rows.try_emplace(state.word_ids[i], g);
    if (!inserted) pos->second += g;
  }
  out.embedding_rows.reserve(rows.size());
  for (auto& [w, g] : rows) out.embedding_rows.emplace_back(w, std::move(g));
  return out;
}

void DocGradients::add_to(Gradients& total, double scale) const {
  for (std::size_t l = 0; l < dense.z_layers.size(); ++l) total.z_layers[l] += scale * dense.z_layers[l];
  total.feedback += scale * dense.feedback;
  for (std::size_t l = 0; l < dense.theta_layers.size(); ++l)
    total.theta_layers[l] += scale * dense.theta_layers[l];
  total.head_weight += scale * dense.head_weight;
  total.head_bias += scale * dense.head_bias;
  for (const auto& [w, g] : embedding_rows) total.embedding.row(w) += scale * g.transpose();
}

BackwardResult backward(const EmbeddingState& state, const ModelParams& p, const HyperParams& hp, int label,
                        const LossConfig& cfg) {
  DocGradients sparse = backward_sparse(state, p, hp, label, cfg);
  BackwardResult r;
  r.loss = sparse.loss;
  r.grads = Gradients::zeros_like(p);
  sparse.add_to(r.grads, 1.0);
  return r;
}

// ---------------------------------------------------------------------------
// Finite-difference check

double document_loss(const Document& doc, const ModelParams& p, const HyperParams& hp,
                     const DropoutMasks& masks, const LossConfig& cfg) {
  auto state = model::forward_with_masks(doc, p, hp, masks);
  return loss(model::classify(state.head_input(), p), doc.label, cfg);
}

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max(1e-8, std::abs(a) + std::abs(b));
}

namespace {

using Real = long double;
using RVec = std::vector<Real>;

// Flat extended-precision copy of the parameters, arrays in canonical order.
struct FlatParams {
  std::vector<std::string> names;
  std::vector<std::size_t> rows, cols;
  std::vector<RVec> values;  // column-major

  explicit FlatParams(const model::ParamArrays& p) {
    p.for_each_array([this](std::string_view name, const double* d, std::size_t r, std::size_t c) {
      names.emplace_back(name);
      rows.push_back(r);
      cols.push_back(c);
      values.emplace_back(d, d + r * c);
    });
  }
  Real at(std::size_t a, std::size_t r, std::size_t c) const { return values[a][c * rows[a] + r]; }
};

// Independent loop-based evaluation of the document loss, used only as the
// finite-difference objective. Shares no code with forward()/backward().
class ReferenceLoss {
 public:
  ReferenceLoss(const HyperParams& hp, const Document& doc, const DropoutMasks& masks,
                const LossConfig& cfg)
      : hp_(hp), doc_(doc), masks_(masks), cfg_(cfg) {}

  Real operator()(const FlatParams& p) const {
    const std::size_t D = hp_.dim;
    const std::size_t N = doc_.size();
    const std::size_t z0 = 1, fb = 1 + hp_.depth_z, th0 = fb + 1, head = th0 + hp_.depth_theta;

    std::vector<RVec> inputs(N, RVec(D));
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t d = 0; d < D; ++d)
        inputs[i][d] = p.at(0, doc_.word_ids[i], d) * mask(masks_.word, i, d);

    RVec theta_fb(D, 0.0L);
    RVec theta(D, 0.0L);
    for (std::size_t t = 0; t < hp_.unroll; ++t) {
      RVec inject = matvec(p, fb, theta_fb);
      RVec sum(D, 0.0L);
      for (std::size_t i = 0; i < N; ++i) {
        RVec h = inputs[i];
        for (std::size_t l = 0; l < hp_.depth_z; ++l) {
          RVec a = matvec(p, z0 + l, h);
          if (l == 0)
            for (std::size_t d = 0; d < D; ++d) a[d] += inject[d];
          h = tanh_all(a);
        }
        h = unit(h);
        for (std::size_t d = 0; d < D; ++d) sum[d] += h[d] * mask(masks_.z[t], i, d);
      }
      RVec h = sum;
      for (std::size_t l = 0; l < hp_.depth_theta; ++l) h = tanh_all(matvec(p, th0 + l, h));
      theta = unit(h);
      for (std::size_t d = 0; d < D; ++d) theta_fb[d] = theta[d] * mask(masks_.theta, t, d);
    }

    RVec logits = matvec(p, head, theta_fb);
    for (std::size_t c = 0; c < logits.size(); ++c) logits[c] += p.values[head + 1][c];
    const Real w = static_cast<Real>(cfg_.weight(doc_.label));
    if (cfg_.kind == LossKind::BinaryCrossEntropy) {
      const Real x = logits[0];
      const Real sp = std::max(x, 0.0L) + std::log1p(std::exp(-std::abs(x)));
      return w * (sp - (doc_.label == 1 ? x : 0.0L));
    }
    Real mx = logits[0];
    for (Real x : logits) mx = std::max(mx, x);
    Real s = 0.0L;
    for (Real x : logits) s += std::exp(x - mx);
    return w * (mx + std::log(s) - logits[static_cast<std::size_t>(doc_.label)]);
  }

 private:
  static Real mask(const std::vector<Vec>& masks, std::size_t i, std::size_t d) {
    if (i >= masks.size() || masks[i].size() == 0) return 1.0L;
    return masks[i][static_cast<Eigen::Index>(d)];
  }
  static RVec matvec(const FlatParams& p, std::size_t a, const RVec& x) {
    RVec y(p.rows[a], 0.0L);
    for (std::size_t c = 0; c < p.cols[a]; ++c)
      for (std::size_t r = 0; r < p.rows[a]; ++r) y[r] += p.at(a, r, c) * x[c];
    return y;
  }
  static RVec tanh_all(RVec v) {
    for (Real& x : v) x = std::tanh(x);
    return v;
  }
  static RVec unit(RVec v) {
    Real n = 0.0L;
    for (Real x : v) n += x * x;
    n = std::sqrt(n);
    if (!(n > static_cast<Real>(model::kNormEpsilon))) return RVec(v.size(), 0.0L);
    for (Real& x : v) x /= n;
    return v;
  }

  const HyperParams& hp_;
  const Document& doc_;
  const DropoutMasks& masks_;
  const LossConfig& cfg_;
};

}  // namespace

GradCheckReport grad_check(const ModelParams& p, const HyperParams& hp, const Document& doc,
                           const LossConfig& cfg, const GradCheckOptions& opt) {
  const DropoutMasks masks = opt.masks ? *opt.masks : model::identity_masks(hp, doc.size());
  const auto state = model::forward_with_masks(doc, p, hp, masks);
  const BackwardResult analytic = backward(state, p, hp, doc.label, cfg);
  const FlatParams grads(analytic.grads);

  FlatParams work(p);
  const ReferenceLoss reference(hp, doc, masks, cfg);
  Rng rng(opt.seed);

  std::vector<std::uint32_t> present(doc.word_ids.begin(), doc.word_ids.end());
  std::sort(present.begin(), present.end());
  present.erase(std::unique(present.begin(), present.end()), present.end());

  GradCheckReport report;
  for (std::size_t a = 0; a < work.values.size(); ++a) {
    std::vector<std::size_t> candidates;
    if (work.names[a] == "embedding") {
      // Column-major: entry (row w, col d) lives at d * rows + w.
      for (std::size_t d = 0; d < work.cols[a]; ++d)
        for (auto w : present) candidates.push_back(d * work.rows[a] + w);
    } else {
      candidates.resize(work.values[a].size());
      std::iota(candidates.begin(), candidates.end(), std::size_t{0});
    }
    if (candidates.size() > opt.coords_per_array) {
      rng.shuffle(candidates);
      candidates.resize(opt.coords_per_array);
    }

    ArrayCheck check{work.names[a], candidates.size(), 0.0};
    const Real eps = static_cast<Real>(opt.eps);
    for (auto idx : candidates) {
      Real& x = work.values[a][idx];
      const Real saved = x;
      x = saved + eps;
      const Real up = reference(work);
      x = saved - eps;
      const Real down = reference(work);
      x = saved;
      const auto numeric = static_cast<double>((up - down) / (2.0L * eps));
      check.max_rel_error =
          std::max(check.max_rel_error, relative_error(static_cast<double>(grads.values[a][idx]), numeric));
    }
    report.coordinates += check.coordinates;
    report.max_rel_error = std::max(report.max_rel_error, check.max_rel_error);
    report.arrays.push_back(std::move(check));
  }
  return report;
}

}  // namespace conn::diff
