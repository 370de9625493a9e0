#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "conn/corpus.hpp"
#include "conn/rng.hpp"

namespace conn::model {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct HyperParams {
  std::size_t dim = 10;
  std::size_t unroll = 1;
  std::size_t depth_z = 1;      // 1 or 2
  std::size_t depth_theta = 1;  // 1, 2 or 3
  double dropout_word = 0.0;
  double dropout_z = 0.0;
  double dropout_theta = 0.0;
  std::size_t num_classes = 2;

  void validate() const;
  /// Binary problems use a single sigmoid logit.
  std::size_t head_outputs() const { return num_classes == 2 ? 1 : num_classes; }
  bool operator==(const HyperParams&) const = default;
};

/// Parameter arrays in canonical order:
///   embedding (V x D), z_layers[0..depth_z), feedback (D x D),
///   theta_layers[0..depth_theta), head_weight (outputs x D), head_bias.
/// z_layers[0] maps a word embedding, feedback maps the previous document
/// embedding into the same first-layer pre-activation.
struct ParamArrays {
  Mat embedding;
  std::vector<Mat> z_layers;
  Mat feedback;
  std::vector<Mat> theta_layers;
  Mat head_weight;
  Vec head_bias;

  std::size_t vocab_size() const { return static_cast<std::size_t>(embedding.rows()); }

  /// Calls f(name, data, rows, cols) for every array in canonical order.
  /// Data is column-major.
  void for_each_array(const std::function<void(std::string_view, double*, std::size_t, std::size_t)>& f);
  void for_each_array(
      const std::function<void(std::string_view, const double*, std::size_t, std::size_t)>& f) const;
  std::size_t num_values() const;
  bool all_finite() const;
  bool same_shape(const ParamArrays& other) const;
  void set_zero();
};

struct ModelParams : ParamArrays {
  static ModelParams zeros(const HyperParams& hp, std::size_t vocab_size);
  bool operator==(const ModelParams& other) const;
};

/// Every weight uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] with fan_in = D
/// (the embedding table included); the head bias starts at zero.
ModelParams init_params(const HyperParams& hp, std::size_t vocab_size, std::uint64_t seed);

/// v / ||v|| when ||v|| > 1e-12, the zero vector otherwise.
Vec normalize(const Vec& v);
inline constexpr double kNormEpsilon = 1e-12;

enum class Mode { Train, Eval };

/// Inverted-dropout scale vectors (entries 0 or 1/(1-p)). An empty vector
/// means the identity mask.
struct DropoutMasks {
  std::vector<Vec> word;             // [i]      per word occurrence, on E rows
  std::vector<std::vector<Vec>> z;   // [t][i]   on normalized mu_z
  std::vector<Vec> theta;            // [t]      on normalized mu_theta
};

DropoutMasks sample_masks(const HyperParams& hp, std::size_t num_words, Rng& rng);
DropoutMasks identity_masks(const HyperParams& hp, std::size_t num_words);

/// One dense tanh stack evaluation: pre-activations and outputs per layer.
struct StackTrace {
  std::vector<Vec> pre;
  std::vector<Vec> out;
  const Vec& last() const { return out.back(); }
};

struct IterationState {
  Vec feedback_in;                 // masked mu_theta^(t-1); zero at t = 1
  Vec feedback_term;               // feedback * feedback_in
  std::vector<StackTrace> z;       // [i]
  std::vector<Vec> mu_z;           // [i] normalized
  Vec z_sum;                       // sum_i mask ⊙ mu_z[i], in word order
  StackTrace theta;
  Vec mu_theta;                    // normalized
  Vec mu_theta_masked;             // mask ⊙ mu_theta, fed forward and to the head
};

struct EmbeddingState {
  Mode mode = Mode::Eval;
  std::vector<std::uint32_t> word_ids;
  std::vector<Vec> word_inputs;  // masked E rows
  DropoutMasks masks;
  std::vector<IterationState> iterations;

  const Vec& embedding() const { return iterations.back().mu_theta; }
  const Vec& head_input() const { return iterations.back().mu_theta_masked; }
};

/// Cooperative iteration. For t = 1..T every word embedding passes through
/// the z-stack with the previous document embedding injected at the first
/// layer, then the summed word embeddings pass through the theta-stack.
/// Every stage is L2-normalized. Throws ModelError on a non-finite value.
EmbeddingState forward(const Document& doc, const ModelParams& p, const HyperParams& hp, Mode mode,
                       Rng* rng = nullptr);
EmbeddingState forward_with_masks(const Document& doc, const ModelParams& p, const HyperParams& hp,
                                  const DropoutMasks& masks, Mode mode = Mode::Train);

/// Eval-mode document embedding mu_theta^(T).
Vec embed(const Document& doc, const ModelParams& p, const HyperParams& hp);

/// tanh stack used by both networks; `injected` is added to the first
/// pre-activation when non-empty.
StackTrace run_stack(const std::vector<Mat>& layers, const Vec& input, const Vec* injected = nullptr);

Vec classify(const Vec& mu_theta, const ModelParams& p);
/// Class probabilities from logits: sigmoid for one logit, softmax otherwise.
Vec probabilities(const Vec& logits);
/// Argmax over class probabilities, lowest index on ties.
int predict(const Vec& logits);

// Checkpoint container (all integers/floats little-endian):
//   magic "CONNCKPT", u32 version=1,
//   u64 V, D, T, depth_z, depth_theta, C, f64 dropout_word/z/theta,
//   u64 label-table hash, u64 array count,
//   per array: u64 rows, u64 cols, rows*cols f64 (column-major).
struct Checkpoint {
  HyperParams hp;
  std::uint64_t label_hash = 0;
  ModelParams params;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace conn::model
