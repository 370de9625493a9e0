#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "conn/corpus.hpp"
#include "conn/diff.hpp"
#include "conn/model.hpp"

namespace conn::train {

using diff::Gradients;
using diff::LossConfig;
using model::HyperParams;
using model::ModelParams;

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// One bias-corrected Adam update over flat arrays. `step` is the 1-based
/// step number after incrementing.
void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                 std::span<double> v, std::uint64_t step, const AdamConfig& cfg);

struct AdamMoments {
  Gradients m;
  Gradients v;
  std::uint64_t step = 0;

  static AdamMoments zeros_like(const ModelParams& p);
};

void adam_step(ModelParams& p, const Gradients& g, AdamMoments& mom, const AdamConfig& cfg);

/// Without-replacement minibatches: each epoch is a fresh shuffle, the last
/// batch of an epoch may be short.
class BatchSampler {
 public:
  BatchSampler(std::size_t corpus_size, std::uint64_t seed);

  std::vector<std::size_t> next(std::size_t batch_size);
  std::size_t epoch() const { return epoch_; }

 private:
  void reshuffle();

  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
  Rng rng_;
};

struct TrainConfig {
  std::size_t batch_size = 100;
  std::size_t num_batches = 300;
  AdamConfig adam;
  std::uint64_t seed = 1;
  std::size_t eval_every = 50;
  HyperParams hp;
  LossConfig loss;
  std::size_t threads = 1;

  void validate() const;
};

/// Mann-Whitney AUC: (concordant + 0.5 * tied) / (#pos * #neg) over all
/// positive/negative pairs, computed from sorted ranks. Throws TrainError
/// when only one class is present.
double auc(std::span<const double> scores, std::span<const int> labels);

struct Metrics {
  double accuracy = 0.0;
  std::optional<double> auc;
  double mean_loss = 0.0;
  std::size_t num_docs = 0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]

  /// JSON object: accuracy, auc (null when not binary), mean_loss, num_docs,
  /// confusion, and optionally the class names.
  std::string to_json(const LabelTable* labels = nullptr) const;
  bool operator==(const Metrics&) const = default;
};

/// Eval-mode metrics; argmax prediction with lowest-index tie-break, AUC from
/// the positive-class probability.
Metrics evaluate(const ModelParams& p, const std::vector<Document>& docs, const HyperParams& hp,
                 const LossConfig& loss, std::size_t threads = 1);

struct HistoryRow {
  std::size_t batch = 0;
  double train_loss = 0.0;
  std::optional<double> val_accuracy;
  std::optional<double> val_auc;
};

/// `batch,train_loss,val_accuracy,val_auc`, 17 significant digits, empty
/// field when a value is not available.
void write_history_csv(std::ostream& out, const std::vector<HistoryRow>& history);

struct TrainResult {
  ModelParams final_params;
  ModelParams best_params;
  std::size_t best_batch = 0;
  std::vector<HistoryRow> history;
};

/// Minibatch training with Adam on the mean batch gradient. Every
/// `eval_every` batches (and after the last one) a history row records the
/// mean training loss since the previous row and, when a validation set is
/// given, its metrics. The best-validation parameters are kept (by AUC for
/// binary problems, accuracy otherwise; earliest wins ties).
TrainResult train(const std::vector<Document>& train_docs, std::size_t vocab_size,
                  const std::vector<Document>* validation, const TrainConfig& cfg,
                  std::ostream* progress = nullptr);

}  // namespace conn::train
