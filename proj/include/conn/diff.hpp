#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "conn/model.hpp"

namespace conn::diff {

using model::Mat;
using model::Vec;

/// Parameter-shaped accumulator.
struct Gradients : model::ParamArrays {
  static Gradients zeros_like(const model::ParamArrays& p, bool with_embedding = true);
};

enum class LossKind { BinaryCrossEntropy, CrossEntropy };

struct LossConfig {
  LossKind kind = LossKind::BinaryCrossEntropy;
  std::vector<double> class_weights;  // empty = all ones

  /// Binary cross-entropy for two classes, cross-entropy otherwise.
  static LossConfig for_classes(std::size_t num_classes);
  double weight(int label) const;
  void validate(std::size_t num_classes) const;
};

/// Weighted negative log-likelihood from logits via log-sum-exp / softplus.
double loss(const Vec& logits, int label, const LossConfig& cfg);
/// d loss / d logits.
Vec loss_gradient(const Vec& logits, int label, const LossConfig& cfg);

struct BackwardResult {
  double loss = 0.0;
  Gradients grads;
};

/// Gradient of one document's loss with the embedding table kept sparse:
/// `dense.embedding` is empty and `embedding_rows` holds (word id, row
/// gradient) sorted by word id.
struct DocGradients {
  double loss = 0.0;
  Gradients dense;
  std::vector<std::pair<std::uint32_t, Vec>> embedding_rows;

  /// total += scale * this
  void add_to(Gradients& total, double scale) const;
};

DocGradients backward_sparse(const model::EmbeddingState& state, const model::ModelParams& p,
                             const model::HyperParams& hp, int label, const LossConfig& cfg);

/// Exact reverse sweep through the head, every unrolled iteration, both tanh
/// stacks, the feedback path, both normalizations and the (fixed) dropout
/// masks, down to the embedding rows of the words in the document.
BackwardResult backward(const model::EmbeddingState& state, const model::ModelParams& p,
                        const model::HyperParams& hp, int label, const LossConfig& cfg);

/// Backward pass through v -> v/||v||: (I - u u^T) g / ||v||, zero at the
/// zero branch.
Vec normalize_backward(const Vec& v, const Vec& grad_out);

/// Backward through a tanh stack; accumulates layer gradients and returns
/// the gradient with respect to the stack input. The gradient with respect
/// to the first-layer pre-activation is written to `first_pre_grad` when given.
Vec stack_backward(const std::vector<Mat>& layers, const Vec& input, const model::StackTrace& trace,
                   const Vec& grad_out, std::vector<Mat>& layer_grads, Vec* first_pre_grad = nullptr);

/// Loss of one document with fixed masks; the finite-difference objective.
double document_loss(const Document& doc, const model::ModelParams& p,
                     const model::HyperParams& hp, const model::DropoutMasks& masks,
                     const LossConfig& cfg);

struct GradCheckOptions {
  double eps = 1e-6;
  std::size_t coords_per_array = 200;
  std::uint64_t seed = 0;
  /// Fixed masks reused for every perturbed evaluation; identity masks
  /// (eval mode) when absent.
  std::optional<model::DropoutMasks> masks;
};

struct ArrayCheck {
  std::string name;
  std::size_t coordinates = 0;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::vector<ArrayCheck> arrays;
};

/// |a - b| / max(1e-8, |a| + |b|)
double relative_error(double a, double b);

/// Compares backward against central differences on a random subset of
/// coordinates per array. Embedding coordinates are drawn from rows of
/// words present in the document (all other rows have no data path).
GradCheckReport grad_check(const model::ModelParams& p, const model::HyperParams& hp,
                           const Document& doc, const LossConfig& cfg,
                           const GradCheckOptions& opt = {});

}  // namespace conn::diff
