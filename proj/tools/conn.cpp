// conn: command-line front end for preprocessing, synthetic data, training,
// evaluation, embedding export, word relevance and verification suites.

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <numeric>
#include <sstream>
#include <thread>

#include "conn/config.hpp"
#include "conn/corpus.hpp"
#include "conn/interpret.hpp"
#include "conn/model.hpp"
#include "conn/parallel.hpp"
#include "conn/synth.hpp"
#include "conn/train.hpp"
#include "conn/verify.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace conn;

namespace {

constexpr int kOk = 0;
constexpr int kVerificationFailed = 1;
constexpr int kInputError = 2;

// Any input, configuration or runtime failure that should end the command
// with exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  out << text;
}

config::RunConfig load_config(const std::string& path) {
  return path.empty() ? config::RunConfig{} : config::RunConfig::load(path);
}

json metrics_json(const train::Metrics& m, const LabelTable& labels) { return json::parse(m.to_json(&labels)); }

model::Checkpoint load_checked(const std::string& ckpt_path, const Corpus& corpus) {
  auto ckpt = model::load_checkpoint(ckpt_path);
  if (ckpt.label_hash != corpus.labels.hash())
    throw UsageError("checkpoint label table does not match the corpus labels");
  if (ckpt.params.vocab_size() != corpus.vocab.size())
    throw UsageError("checkpoint vocabulary size " + std::to_string(ckpt.params.vocab_size()) +
                     " does not match the corpus (" + std::to_string(corpus.vocab.size()) + ")");
  return ckpt;
}

std::vector<std::size_t> parse_list(const std::string& text, const char* name) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const unsigned long v = std::stoul(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw UsageError(std::string("--") + name + " expects a comma-separated list of integers");
    }
  }
  if (out.empty()) throw UsageError(std::string("--") + name + " is empty");
  return out;
}

// ---------------------------------------------------------------------------

struct PreprocessArgs {
  std::string input, format = "auto", out, config;
};

int cmd_preprocess(const PreprocessArgs& a) {
  const auto cfg = load_config(a.config);
  std::string format = a.format;
  if (format == "auto") format = fs::is_directory(a.input) ? "newsgroups" : "csv";
  RawCorpus raw;
  if (format == "newsgroups") {
    raw = load_newsgroups(a.input);
  } else if (format == "csv") {
    raw = load_csv(fs::path(a.input));
  } else {
    throw UsageError("unknown format '" + format + "' (expected newsgroups or csv)");
  }
  for (const auto& w : raw.warnings) std::cerr << "warning: " << w << '\n';
  const auto result = preprocess(raw, cfg.pipeline);
  const Corpus& c = result.corpus;
  save_corpus(a.out, c);
  cfg.save(a.out + ".config.json");
  std::cout << "V " << c.vocab.size() << "\nM " << c.num_docs() << "\nC " << c.num_classes() << "\nmean_length "
            << c.mean_length() << "\nskipped " << raw.skipped << "\nempty_dropped " << result.empty_dropped << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string model, out, latent;
  std::size_t docs = 2000, length = 50, vocab = 100;
  std::uint64_t seed = 1;
};

std::vector<double> numbers(const json& j, const char* what) {
  if (!j.is_array()) throw UsageError(std::string("model spec: ") + what + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& e : j) {
    if (!e.is_number()) throw UsageError(std::string("model spec: ") + what + " must be an array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

std::pair<synth::LdaTrueModel, synth::Labeler> load_model_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open model spec " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError(std::string("model spec is not valid JSON: ") + e.what());
  }
  for (const auto& item : j.items())
    if (item.key() != "alpha" && item.key() != "beta" && item.key() != "labeler")
      throw UsageError("unknown model spec key '" + item.key() + "'");
  synth::LdaTrueModel model;
  model.alpha = numbers(j.at("alpha"), "alpha");
  for (const auto& row : j.at("beta")) model.beta.push_back(numbers(row, "beta row"));
  synth::Labeler labeler = synth::default_labeler();
  if (j.contains("labeler")) {
    const auto& l = j["labeler"];
    if (l.contains("prototypes")) {
      labeler.kind = synth::Labeler::Kind::Prototypes;
      labeler.prototypes.clear();
      for (const auto& row : l["prototypes"]) labeler.prototypes.push_back(numbers(row, "prototype"));
    } else if (l.contains("direction")) {
      labeler.kind = synth::Labeler::Kind::Direction;
      labeler.direction = numbers(l["direction"], "direction");
    } else {
      throw UsageError("model spec labeler needs 'prototypes' or 'direction'");
    }
  }
  return {model, labeler};
}

int cmd_synth(const SynthArgs& a) {
  synth::LdaTrueModel model = synth::default_model(a.vocab);
  synth::Labeler labeler = synth::default_labeler();
  if (!a.model.empty()) std::tie(model, labeler) = load_model_spec(a.model);
  const auto sampled = synth::sample_corpus(model, a.docs, a.length, labeler, a.seed);
  save_corpus(a.out, sampled.corpus);
  const fs::path latent = a.latent.empty() ? fs::path(a.out + ".latent.tsv") : fs::path(a.latent);
  std::ostringstream text;
  synth::write_latent(text, sampled.latent);
  write_text(latent, text.str());
  std::cout << "V " << sampled.corpus.vocab.size() << "\nM " << sampled.corpus.num_docs() << "\nC "
            << sampled.corpus.num_classes() << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string corpus, config, out;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
};

int cmd_train(const TrainArgs& a) {
  auto cfg = load_config(a.config);
  if (a.seed) cfg.seed = *a.seed;
  if (!a.corpus.empty()) cfg.data.corpus = a.corpus;
  if (cfg.data.corpus.empty()) throw UsageError("no corpus given (--corpus or data.corpus)");

  const Corpus corpus = load_corpus(cfg.data.corpus);
  const auto tcfg = cfg.train_config(corpus.num_classes(), a.threads);

  std::vector<Document> train_docs, val_docs;
  if (!cfg.data.validation.empty()) {
    const Corpus val = load_corpus(cfg.data.validation);
    if (val.vocab.tokens() != corpus.vocab.tokens() || !(val.labels == corpus.labels))
      throw UsageError("validation corpus vocabulary or labels differ from the training corpus");
    train_docs = corpus.docs;
    val_docs = val.docs;
  } else {
    std::vector<std::size_t> order(corpus.num_docs());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = Rng::stream(cfg.seed, 3);
    rng.shuffle(order);
    const auto n_val = static_cast<std::size_t>(
        std::floor(cfg.data.validation_fraction * static_cast<double>(corpus.num_docs())));
    if (n_val >= corpus.num_docs()) throw UsageError("validation split leaves no training documents");
    for (std::size_t i = 0; i < order.size(); ++i)
      (i < n_val ? val_docs : train_docs).push_back(corpus.docs[order[i]]);
  }

  fs::create_directories(a.out);
  cfg.save(fs::path(a.out) / "config.json");
  const auto result =
      train::train(train_docs, corpus.vocab.size(), val_docs.empty() ? nullptr : &val_docs, tcfg, &std::cout);

  model::save_checkpoint(fs::path(a.out) / "model.ckpt", {tcfg.hp, corpus.labels.hash(), result.best_params});
  model::save_checkpoint(fs::path(a.out) / "final.ckpt", {tcfg.hp, corpus.labels.hash(), result.final_params});
  std::ostringstream history;
  train::write_history_csv(history, result.history);
  write_text(fs::path(a.out) / "history.csv", history.str());

  json m;
  m["best_batch"] = result.best_batch;
  m["num_batches"] = tcfg.num_batches;
  m["train"] = metrics_json(train::evaluate(result.best_params, train_docs, tcfg.hp, tcfg.loss, a.threads),
                            corpus.labels);
  if (!val_docs.empty())
    m["validation"] = metrics_json(train::evaluate(result.best_params, val_docs, tcfg.hp, tcfg.loss, a.threads),
                                   corpus.labels);
  write_text(fs::path(a.out) / "metrics.json", m.dump(2) + "\n");
  std::cout << "wrote " << (fs::path(a.out) / "model.ckpt").string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint, corpus, out;
  std::size_t threads = 1;
};

int cmd_eval(const EvalArgs& a) {
  const Corpus corpus = load_corpus(a.corpus);
  const auto ckpt = load_checked(a.checkpoint, corpus);
  const auto loss = diff::LossConfig::for_classes(ckpt.hp.num_classes);
  const auto m = train::evaluate(ckpt.params, corpus.docs, ckpt.hp, loss, a.threads);
  const std::string text = m.to_json(&corpus.labels) + "\n";
  if (!a.out.empty()) write_text(a.out, text);
  std::cout << text;
  return kOk;
}

int cmd_embed(const EvalArgs& a) {
  const Corpus corpus = load_corpus(a.corpus);
  const auto ckpt = load_checked(a.checkpoint, corpus);
  std::vector<model::Vec> rows(corpus.num_docs());
  parallel_for(rows.size(), a.threads,
               [&](std::size_t i) { rows[i] = model::embed(corpus.docs[i], ckpt.params, ckpt.hp); });
  std::ostringstream out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << i << '\t' << corpus.labels.name_of(corpus.docs[i].label);
    for (Eigen::Index d = 0; d < rows[i].size(); ++d) out << '\t' << fmt17(rows[i][d]);
    out << '\n';
  }
  write_text(a.out, out.str());
  std::cout << "wrote " << rows.size() << " embeddings of dimension " << ckpt.hp.dim << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

struct InterpretArgs {
  std::string checkpoint, corpus, vector, init = "uniform", out, trace;
  std::optional<std::size_t> doc;
  std::size_t top = 10, steps = 500;
  double lr = 1e-2;
  std::size_t threads = 1;
};

int cmd_interpret(const InterpretArgs& a) {
  const Corpus corpus = load_corpus(a.corpus);
  const auto ckpt = load_checked(a.checkpoint, corpus);

  json target;
  model::Vec mu;
  if (a.doc) {
    if (*a.doc >= corpus.num_docs()) throw UsageError("--doc is out of range");
    mu = model::embed(corpus.docs[*a.doc], ckpt.params, ckpt.hp);
    target["doc"] = *a.doc;
  } else if (!a.vector.empty()) {
    std::vector<double> values;
    std::stringstream ss(a.vector);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        values.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw UsageError("--vector expects comma-separated numbers");
      }
    }
    if (values.size() != ckpt.hp.dim) throw UsageError("--vector must have " + std::to_string(ckpt.hp.dim) + " entries");
    mu = Eigen::Map<model::Vec>(values.data(), static_cast<Eigen::Index>(values.size()));
    target["vector"] = values;
  } else {
    throw UsageError("give --doc or --vector");
  }

  std::vector<std::uint32_t> candidates(corpus.vocab.size());
  std::iota(candidates.begin(), candidates.end(), std::uint32_t{0});
  const interpret::RelevanceProblem problem(ckpt.params, mu, candidates);

  interpret::SolveOptions opt;
  opt.steps = a.steps;
  opt.learning_rate = a.lr;
  if (a.init == "nearest") {
    std::vector<model::Vec> embeddings(corpus.num_docs());
    parallel_for(embeddings.size(), a.threads,
                 [&](std::size_t i) { embeddings[i] = model::embed(corpus.docs[i], ckpt.params, ckpt.hp); });
    const std::size_t nearest = interpret::nearest(mu, embeddings);
    opt.init = interpret::count_init(corpus.docs[nearest], candidates);
    target["nearest_doc"] = nearest;
  } else if (a.init != "uniform") {
    throw UsageError("--init must be uniform or nearest");
  }

  const auto res = interpret::solve_relevance(problem, opt);
  json j;
  j["target"] = target;
  j["initial_objective"] = res.initial_objective;
  j["objective"] = res.objective;
  j["iterations"] = res.iterations;
  j["top_words"] = json::array();
  for (const auto& w : interpret::top_words(res.f, candidates, corpus.vocab, std::min(a.top, candidates.size())))
    j["top_words"].push_back({{"token", w.token}, {"word_id", w.word_id}, {"weight", w.weight}});
  const std::string text = j.dump(2) + "\n";
  if (!a.out.empty()) write_text(a.out, text);
  if (!a.trace.empty()) {
    std::ostringstream csv;
    csv << "step,objective\n";
    for (std::size_t i = 0; i < res.trace.size(); ++i) csv << i << ',' << fmt17(res.trace[i]) << '\n';
    write_text(a.trace, csv.str());
  }
  std::cout << text;
  return kOk;
}

// ---------------------------------------------------------------------------

struct VerifyArgs {
  std::string suite, out;
  std::uint64_t seed = 1;
  std::size_t configs = 100, instances = 1000;
  std::size_t threads = 1;
};

int cmd_verify(const VerifyArgs& a) {
  verify::Report report;
  if (a.suite == "gradcheck") {
    report = verify::gradcheck_suite(a.configs, a.seed, a.threads);
  } else if (a.suite == "oracle") {
    verify::OracleSuiteOptions opt;
    opt.seed = a.seed;
    report = verify::oracle_suite(opt);
  } else if (a.suite == "auc") {
    report = verify::auc_suite(a.instances, a.seed);
  } else {
    throw UsageError("unknown suite '" + a.suite + "'");
  }
  const std::string text = report.to_json() + "\n";
  if (!a.out.empty()) write_text(a.out, text);
  std::cout << text;
  for (const auto& p : report.properties)
    std::cerr << (p.passed ? "PASS " : "FAIL ") << p.name << " = " << p.measured << '\n';
  return report.passed() ? kOk : kVerificationFailed;
}

// ---------------------------------------------------------------------------

struct SweepArgs {
  std::string corpus, config, out, dims = "10", unrolls = "1", depth_z = "1", depth_theta = "1";
  std::size_t folds = 5;
  std::size_t threads = 1;
};

int cmd_sweep(const SweepArgs& a) {
  const auto cfg = load_config(a.config);
  const Corpus corpus = load_corpus(a.corpus);
  if (a.folds < 2 || a.folds > corpus.num_docs()) throw UsageError("--folds must lie in [2, M]");
  const auto folds = kfold(corpus, a.folds, cfg.seed);
  fs::create_directories(a.out);
  cfg.save(fs::path(a.out) / "config.json");

  std::ostringstream rows, summary;
  rows << "dim,unroll,depth_z,depth_theta,fold,accuracy,auc\n";
  summary << "dim,unroll,depth_z,depth_theta,mean_accuracy,sem_accuracy\n";
  for (auto dim : parse_list(a.dims, "dims"))
    for (auto unroll : parse_list(a.unrolls, "unrolls"))
      for (auto dz : parse_list(a.depth_z, "depth-z"))
        for (auto dt : parse_list(a.depth_theta, "depth-theta")) {
          auto run = cfg;
          run.model.dim = dim;
          run.model.unroll = unroll;
          run.model.depth_z = dz;
          run.model.depth_theta = dt;
          const auto tcfg = run.train_config(corpus.num_classes(), a.threads);
          std::vector<double> acc;
          for (std::size_t f = 0; f < a.folds; ++f) {
            const Corpus train_part = corpus.subset(folds.complement(f));
            const Corpus test_part = corpus.subset(folds.members(f));
            const auto res = train::train(train_part.docs, corpus.vocab.size(), nullptr, tcfg);
            const auto m = train::evaluate(res.final_params, test_part.docs, tcfg.hp, tcfg.loss, a.threads);
            acc.push_back(m.accuracy);
            rows << dim << ',' << unroll << ',' << dz << ',' << dt << ',' << f << ',' << fmt17(m.accuracy) << ','
                 << (m.auc ? fmt17(*m.auc) : "") << '\n';
          }
          const double mean = std::accumulate(acc.begin(), acc.end(), 0.0) / static_cast<double>(acc.size());
          double var = 0.0;
          for (double x : acc) var += (x - mean) * (x - mean);
          var /= static_cast<double>(acc.size() - 1);
          const double sem = std::sqrt(var / static_cast<double>(acc.size()));
          summary << dim << ',' << unroll << ',' << dz << ',' << dt << ',' << fmt17(mean) << ',' << fmt17(sem) << '\n';
          std::cout << "dim " << dim << " unroll " << unroll << " depth_z " << dz << " depth_theta " << dt
                    << " accuracy " << mean << " +- " << sem << '\n';
        }
  write_text(fs::path(a.out) / "sweep.csv", rows.str());
  write_text(fs::path(a.out) / "summary.csv", summary.str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cooperative neural networks for supervised topic models"};
  app.require_subcommand(1);
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  app.add_option("--threads", threads, "Worker threads (default: hardware concurrency)")
      ->check(CLI::PositiveNumber);

  PreprocessArgs pre;
  auto* c_pre = app.add_subcommand("preprocess", "Tokenize raw text into an encoded corpus");
  c_pre->add_option("--input", pre.input, "Newsgroups directory or CSV file")->required();
  c_pre->add_option("--format", pre.format, "auto, newsgroups or csv");
  c_pre->add_option("--out", pre.out, "Encoded corpus file")->required();
  c_pre->add_option("--config", pre.config, "Run configuration JSON (pipeline section)");

  SynthArgs syn;
  auto* c_syn = app.add_subcommand("synth", "Sample a corpus from a known LDA model");
  c_syn->add_option("--model", syn.model, "Model spec JSON {alpha, beta, labeler}; default benchmark if absent");
  c_syn->add_option("--docs", syn.docs, "Number of documents");
  c_syn->add_option("--length", syn.length, "Words per document");
  c_syn->add_option("--vocab", syn.vocab, "Vocabulary size of the default model");
  c_syn->add_option("--seed", syn.seed, "Random seed");
  c_syn->add_option("--out", syn.out, "Encoded corpus file")->required();
  c_syn->add_option("--latent", syn.latent, "Latent record file (default: <out>.latent.tsv)");

  TrainArgs tr;
  std::uint64_t train_seed = 0;
  auto* c_tr = app.add_subcommand("train", "Train a model");
  c_tr->add_option("--corpus", tr.corpus, "Encoded corpus (overrides data.corpus)");
  c_tr->add_option("--config", tr.config, "Run configuration JSON");
  auto* seed_opt = c_tr->add_option("--seed", train_seed, "Override the configured seed");
  c_tr->add_option("--out", tr.out, "Output directory")->required();

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Evaluate a checkpoint on a corpus");
  c_ev->add_option("--checkpoint", ev.checkpoint)->required();
  c_ev->add_option("--corpus", ev.corpus)->required();
  c_ev->add_option("--out", ev.out, "Metrics JSON file");

  EvalArgs em;
  auto* c_em = app.add_subcommand("embed", "Export per-document embeddings as TSV");
  c_em->add_option("--checkpoint", em.checkpoint)->required();
  c_em->add_option("--corpus", em.corpus)->required();
  c_em->add_option("--out", em.out, "TSV file: doc_id, label, d0..d(D-1)")->required();

  InterpretArgs in;
  std::size_t doc_id = 0;
  auto* c_in = app.add_subcommand("interpret", "Recover relevant words for a document embedding");
  c_in->add_option("--checkpoint", in.checkpoint)->required();
  c_in->add_option("--corpus", in.corpus)->required();
  auto* doc_opt = c_in->add_option("--doc", doc_id, "Embed this document of the corpus as the target");
  c_in->add_option("--vector", in.vector, "Target embedding as comma-separated numbers")->excludes(doc_opt);
  c_in->add_option("--top", in.top, "Number of words to report");
  c_in->add_option("--init", in.init, "uniform or nearest");
  c_in->add_option("--steps", in.steps, "Optimizer steps")->check(CLI::PositiveNumber);
  c_in->add_option("--lr", in.lr, "Adam learning rate");
  c_in->add_option("--out", in.out, "JSON output file");
  c_in->add_option("--trace", in.trace, "Objective trace CSV");

  VerifyArgs ve;
  auto* c_ve = app.add_subcommand("verify", "Run a verification suite");
  c_ve->add_option("suite", ve.suite, "gradcheck, oracle or auc")
      ->required()
      ->check(CLI::IsMember({"gradcheck", "oracle", "auc"}));
  c_ve->add_option("--seed", ve.seed);
  c_ve->add_option("--configs", ve.configs, "Random configurations (gradcheck)");
  c_ve->add_option("--instances", ve.instances, "Random instances (auc)");
  c_ve->add_option("--out", ve.out, "Report JSON file");

  SweepArgs sw;
  auto* c_sw = app.add_subcommand("sweep", "Cross-validated grid over model hyperparameters");
  c_sw->add_option("--corpus", sw.corpus)->required();
  c_sw->add_option("--config", sw.config);
  c_sw->add_option("--out", sw.out, "Output directory")->required();
  c_sw->add_option("--folds", sw.folds);
  c_sw->add_option("--dims", sw.dims, "Comma-separated embedding dimensions");
  c_sw->add_option("--unrolls", sw.unrolls, "Comma-separated unroll counts");
  c_sw->add_option("--depth-z", sw.depth_z);
  c_sw->add_option("--depth-theta", sw.depth_theta);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (*c_pre) return cmd_preprocess(pre);
    if (*c_syn) return cmd_synth(syn);
    if (*c_tr) {
      tr.threads = threads;
      if (*seed_opt) tr.seed = train_seed;
      return cmd_train(tr);
    }
    if (*c_ev) {
      ev.threads = threads;
      return cmd_eval(ev);
    }
    if (*c_em) {
      em.threads = threads;
      return cmd_embed(em);
    }
    if (*c_in) {
      in.threads = threads;
      if (*doc_opt) in.doc = doc_id;
      return cmd_interpret(in);
    }
    if (*c_ve) {
      ve.threads = threads;
      return cmd_verify(ve);
    }
    if (*c_sw) {
      sw.threads = threads;
      return cmd_sweep(sw);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  }
  return kInputError;
}
