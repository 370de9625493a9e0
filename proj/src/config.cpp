#include "conn/config.hpp"

#include <fstream>
#include <initializer_list>
#include <json.hpp>
#include <sstream>

namespace conn::config {

namespace {

using json = nlohmann::ordered_json;

// Reads typed values out of one JSON object, reporting dotted key paths.
class Section {
 public:
  Section(const json& j, std::string path, std::initializer_list<const char*> known) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config section '" + where() + "' must be an object");
    for (const auto& item : j_.items()) {
      bool ok = false;
      for (const char* k : known) ok = ok || item.key() == k;
      if (!ok) throw ConfigError("unknown config key '" + qualified(item.key()) + "'");
    }
  }

  void read(const char* key, bool& out) const {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) fail(key, "a boolean");
      out = v->get<bool>();
    }
  }
  void read(const char* key, std::size_t& out) const {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) fail(key, "a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void read(const char* key, double& out) const {
    if (const json* v = find(key)) {
      if (!v->is_number()) fail(key, "a number");
      out = v->get<double>();
    }
  }
  void read(const char* key, std::string& out) const {
    if (const json* v = find(key)) {
      if (!v->is_string()) fail(key, "a string");
      out = v->get<std::string>();
    }
  }
  void read(const char* key, std::vector<std::string>& out) const {
    if (const json* v = find(key)) {
      if (!v->is_array()) fail(key, "an array of strings");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_string()) fail(key, "an array of strings");
        out.push_back(e.get<std::string>());
      }
    }
  }
  void read(const char* key, std::vector<double>& out) const {
    if (const json* v = find(key)) {
      if (!v->is_array()) fail(key, "an array of numbers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number()) fail(key, "an array of numbers");
        out.push_back(e.get<double>());
      }
    }
  }
  const json* find(const char* key) const {
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string where() const { return path_.empty() ? "<root>" : path_; }
  [[noreturn]] void fail(const char* key, const char* what) const {
    throw ConfigError("config key '" + qualified(key) + "' must be " + what);
  }

  const json& j_;
  std::string path_;
};

}  // namespace

RunConfig RunConfig::from_json_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig cfg;
  const Section top(root, "", {"seed", "pipeline", "model", "train", "data"});
  std::size_t seed = cfg.seed;
  top.read("seed", seed);
  cfg.seed = seed;

  if (const json* p = top.find("pipeline")) {
    const Section s(*p, "pipeline",
                    {"lowercase", "punctuation", "stopwords", "use_default_stopwords", "stem", "min_count",
                     "max_doc_length"});
    s.read("lowercase", cfg.pipeline.lowercase);
    s.read("punctuation", cfg.pipeline.punctuation);
    s.read("stopwords", cfg.pipeline.stopwords);
    s.read("use_default_stopwords", cfg.pipeline.use_default_stopwords);
    s.read("stem", cfg.pipeline.stem);
    s.read("min_count", cfg.pipeline.min_count);
    s.read("max_doc_length", cfg.pipeline.max_doc_length);
  }
  if (const json* m = top.find("model")) {
    const Section s(*m, "model",
                    {"dim", "unroll", "depth_z", "depth_theta", "dropout_word", "dropout_z", "dropout_theta"});
    s.read("dim", cfg.model.dim);
    s.read("unroll", cfg.model.unroll);
    s.read("depth_z", cfg.model.depth_z);
    s.read("depth_theta", cfg.model.depth_theta);
    s.read("dropout_word", cfg.model.dropout_word);
    s.read("dropout_z", cfg.model.dropout_z);
    s.read("dropout_theta", cfg.model.dropout_theta);
  }
  if (const json* t = top.find("train")) {
    const Section s(*t, "train",
                    {"batch_size", "num_batches", "learning_rate", "beta1", "beta2", "epsilon", "eval_every", "loss",
                     "class_weights"});
    s.read("batch_size", cfg.train.batch_size);
    s.read("num_batches", cfg.train.num_batches);
    s.read("learning_rate", cfg.train.adam.learning_rate);
    s.read("beta1", cfg.train.adam.beta1);
    s.read("beta2", cfg.train.adam.beta2);
    s.read("epsilon", cfg.train.adam.epsilon);
    s.read("eval_every", cfg.train.eval_every);
    s.read("loss", cfg.train.loss);
    s.read("class_weights", cfg.train.class_weights);
    if (cfg.train.loss != "auto" && cfg.train.loss != "bce" && cfg.train.loss != "ce")
      throw ConfigError("config key 'train.loss' must be one of auto, bce, ce");
  }
  if (const json* d = top.find("data")) {
    const Section s(*d, "data", {"corpus", "validation", "validation_fraction"});
    s.read("corpus", cfg.data.corpus);
    s.read("validation", cfg.data.validation);
    s.read("validation_fraction", cfg.data.validation_fraction);
    if (!(cfg.data.validation_fraction >= 0.0 && cfg.data.validation_fraction < 1.0))
      throw ConfigError("config key 'data.validation_fraction' must lie in [0, 1)");
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return from_json_text(text.str());
}

std::string RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["pipeline"] = {{"lowercase", pipeline.lowercase},
                   {"punctuation", pipeline.punctuation},
                   {"stopwords", pipeline.stopwords},
                   {"use_default_stopwords", pipeline.use_default_stopwords},
                   {"stem", pipeline.stem},
                   {"min_count", pipeline.min_count},
                   {"max_doc_length", pipeline.max_doc_length}};
  j["model"] = {{"dim", model.dim},
                {"unroll", model.unroll},
                {"depth_z", model.depth_z},
                {"depth_theta", model.depth_theta},
                {"dropout_word", model.dropout_word},
                {"dropout_z", model.dropout_z},
                {"dropout_theta", model.dropout_theta}};
  j["train"] = {{"batch_size", train.batch_size},
                {"num_batches", train.num_batches},
                {"learning_rate", train.adam.learning_rate},
                {"beta1", train.adam.beta1},
                {"beta2", train.adam.beta2},
                {"epsilon", train.adam.epsilon},
                {"eval_every", train.eval_every},
                {"loss", train.loss},
                {"class_weights", train.class_weights}};
  j["data"] = {{"corpus", data.corpus},
               {"validation", data.validation},
               {"validation_fraction", data.validation_fraction}};
  return j.dump(2) + "\n";
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << to_json();
}

train::TrainConfig RunConfig::train_config(std::size_t num_classes, std::size_t threads) const {
  train::TrainConfig t;
  t.batch_size = train.batch_size;
  t.num_batches = train.num_batches;
  t.adam = train.adam;
  t.eval_every = train.eval_every;
  t.seed = seed;
  t.threads = threads;
  t.hp = model;
  t.hp.num_classes = num_classes;
  if (train.loss == "bce" && num_classes != 2)
    throw ConfigError("train.loss 'bce' needs exactly two classes");
  if (train.loss == "ce" && num_classes == 2)
    throw ConfigError("train.loss 'ce' needs more than two classes (binary problems use one logit)");
  t.loss = diff::LossConfig::for_classes(num_classes);
  t.loss.class_weights = train.class_weights;
  try {
    t.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  }
  return t;
}

}  // namespace conn::config
