#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "conn/corpus.hpp"
#include "conn/model.hpp"
#include "conn/train.hpp"

namespace conn::config {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainSection {
  std::size_t batch_size = 100;
  std::size_t num_batches = 300;
  train::AdamConfig adam;
  std::size_t eval_every = 50;
  std::string loss = "auto";  // auto | bce | ce
  std::vector<double> class_weights;
};

struct DataSection {
  std::string corpus;
  std::string validation;            // separate validation corpus; empty = split
  double validation_fraction = 0.1;  // held out of the training corpus when no file is given
};

/// Run configuration. JSON layout:
///
///   {"seed": 1,
///    "pipeline": {"lowercase", "punctuation", "stopwords", "use_default_stopwords",
///                 "stem", "min_count", "max_doc_length"},
///    "model": {"dim", "unroll", "depth_z", "depth_theta",
///              "dropout_word", "dropout_z", "dropout_theta"},
///    "train": {"batch_size", "num_batches", "learning_rate", "beta1", "beta2",
///              "epsilon", "eval_every", "loss", "class_weights"},
///    "data": {"corpus", "validation", "validation_fraction"}}
///
/// Every key is optional; missing keys keep the defaults above. Unknown keys
/// and wrongly typed values are rejected with the dotted key path.
struct RunConfig {
  std::uint64_t seed = 1;
  PipelineConfig pipeline;
  model::HyperParams model;  // num_classes comes from the corpus
  TrainSection train;
  DataSection data;

  static RunConfig from_json_text(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  /// Complete serialization including every default.
  std::string to_json() const;
  void save(const std::filesystem::path& path) const;

  /// Training configuration for a corpus with `num_classes` labels.
  train::TrainConfig train_config(std::size_t num_classes, std::size_t threads) const;
};

}  // namespace conn::config
