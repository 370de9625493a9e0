#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "conn/corpus.hpp"
#include "conn/model.hpp"

namespace conn::interpret {

using model::Mat;
using model::ModelParams;
using model::Vec;

class InterpretError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Word-relevance problem for a target document embedding mu_theta over a
/// candidate word set S. Each candidate c contributes the eval-mode word
/// embedding z_c = normalize(zstack(E[c]) with feedback * mu_theta injected),
/// and the residual is normalize(thetastack(sum_c f_c z_c)) - mu_theta.
class RelevanceProblem {
 public:
  RelevanceProblem(const ModelParams& p, Vec mu_theta, std::vector<std::uint32_t> candidates);

  std::size_t size() const { return candidates_.size(); }
  const std::vector<std::uint32_t>& candidates() const { return candidates_; }
  const Vec& target() const { return mu_theta_; }

  Vec residual(const Vec& f) const;
  /// ||residual||^2
  double objective(const Vec& f) const;
  /// Objective and its gradient with respect to f.
  double objective_and_gradient(const Vec& f, Vec& grad) const;
  /// Loop-based extended-precision objective, used for finite differences.
  long double reference_objective(const std::vector<long double>& f) const;

 private:
  std::vector<Mat> theta_layers_;
  Vec mu_theta_;
  std::vector<std::uint32_t> candidates_;
  Mat word_embeddings_;  // D x |S|, column c is z_c
};

Vec residual(const Vec& f, const Vec& mu_theta, const ModelParams& p, const std::vector<std::uint32_t>& candidates);

struct SolveOptions {
  std::size_t steps = 500;
  double learning_rate = 1e-2;
  double tol = 0.0;  // stop once the objective is <= tol
  /// Initial weights; uniform 1/|S| when empty.
  Vec init;
};

struct RelevanceResult {
  Vec f;
  double objective = 0.0;
  double initial_objective = 0.0;
  std::size_t iterations = 0;
  std::vector<double> trace;  // objective before each step, then the final one
};

/// Adam on ||residual||^2; returns the best iterate seen (the initial point
/// included). Throws InterpretError on a non-finite objective.
RelevanceResult solve_relevance(const RelevanceProblem& problem, const SolveOptions& opt = {});

/// Word counts of `doc` over the candidate set.
Vec count_init(const Document& doc, const std::vector<std::uint32_t>& candidates);

/// Index of the embedding closest to `target` in Euclidean distance, lowest
/// index on ties. Throws on an empty set.
std::size_t nearest(const Vec& target, const std::vector<Vec>& embeddings);

struct RankedWord {
  std::size_t index = 0;  // position in the candidate set
  std::uint32_t word_id = 0;
  std::string token;
  double weight = 0.0;
};

/// Top n candidates by descending weight, ties by word id.
std::vector<RankedWord> top_words(const Vec& f, const std::vector<std::uint32_t>& candidates,
                                  const Vocabulary& vocab, std::size_t n);

/// Largest relative error between the analytic gradient and central
/// differences of the extended-precision objective over every coordinate.
double gradient_check(const RelevanceProblem& problem, const Vec& f, double eps = 1e-6);

}  // namespace conn::interpret
