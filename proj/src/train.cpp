#include "conn/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <numeric>
#include <ostream>

#include "conn/parallel.hpp"

namespace conn::train {

void AdamConfig::validate() const {
  if (!(learning_rate > 0.0)) throw TrainError("learning_rate must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw TrainError("beta1 must lie in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw TrainError("beta2 must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw TrainError("epsilon must be positive");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw TrainError("batch_size must be >= 1");
  if (eval_every < 1) throw TrainError("eval_every must be >= 1");
  adam.validate();
  hp.validate();
  loss.validate(hp.num_classes);
}

// ---------------------------------------------------------------------------
// Adam

void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                 std::span<double> v, std::uint64_t step, const AdamConfig& cfg) {
  const double t = static_cast<double>(step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    params[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

AdamMoments AdamMoments::zeros_like(const ModelParams& p) {
  return {Gradients::zeros_like(p), Gradients::zeros_like(p), 0};
}

namespace {

struct Flat {
  double* data;
  std::size_t size;
};

std::vector<Flat> flat_arrays(model::ParamArrays& a) {
  std::vector<Flat> out;
  a.for_each_array([&out](std::string_view, double* d, std::size_t r, std::size_t c) { out.push_back({d, r * c}); });
  return out;
}

}  // namespace

void adam_step(ModelParams& p, const Gradients& g, AdamMoments& mom, const AdamConfig& cfg) {
  if (!p.same_shape(g) || !p.same_shape(mom.m) || !p.same_shape(mom.v))
    throw TrainError("adam_step: shape mismatch");
  ++mom.step;
  auto params = flat_arrays(p);
  auto grads = flat_arrays(const_cast<Gradients&>(g));
  auto m = flat_arrays(mom.m);
  auto v = flat_arrays(mom.v);
  for (std::size_t a = 0; a < params.size(); ++a) {
    adam_update({params[a].data, params[a].size}, {grads[a].data, grads[a].size}, {m[a].data, m[a].size},
                {v[a].data, v[a].size}, mom.step, cfg);
  }
}

// ---------------------------------------------------------------------------
// Batches

BatchSampler::BatchSampler(std::size_t corpus_size, std::uint64_t seed) : order_(corpus_size), rng_(seed) {
  if (corpus_size == 0) throw TrainError("cannot sample batches from an empty corpus");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  reshuffle();
}

void BatchSampler::reshuffle() {
  rng_.shuffle(order_);
  cursor_ = 0;
}

std::vector<std::size_t> BatchSampler::next(std::size_t batch_size) {
  if (batch_size == 0) throw TrainError("batch_size must be >= 1");
  if (cursor_ >= order_.size()) {
    reshuffle();
    ++epoch_;
  }
  const std::size_t end = std::min(order_.size(), cursor_ + batch_size);
  std::vector<std::size_t> batch(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(end));
  cursor_ = end;
  return batch;
}

// ---------------------------------------------------------------------------
// Metrics

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw TrainError("auc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the Mann-Whitney U statistic, kept integral: each positive earns 2
  // per lower-scored negative and 1 per tied negative.
  std::uint64_t u2 = 0, negatives_below = 0, positives = 0, negatives = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t pos = 0, neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? pos : neg) += 1;
      ++j;
    }
    u2 += pos * (2 * negatives_below + neg);
    negatives_below += neg;
    positives += pos;
    negatives += neg;
    i = j;
  }
  if (positives == 0 || negatives == 0) throw TrainError("auc needs both classes present");
  return static_cast<double>(u2) / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

std::string Metrics::to_json(const LabelTable* labels) const {
  nlohmann::ordered_json j;
  j["accuracy"] = accuracy;
  j["auc"] = auc ? nlohmann::ordered_json(*auc) : nlohmann::ordered_json(nullptr);
  j["mean_loss"] = mean_loss;
  j["num_docs"] = num_docs;
  j["confusion"] = confusion;
  if (labels != nullptr) j["labels"] = labels->names();
  return j.dump(2);
}

Metrics evaluate(const ModelParams& p, const std::vector<Document>& docs, const HyperParams& hp,
                 const LossConfig& loss, std::size_t threads) {
  const std::size_t n = docs.size();
  std::vector<double> losses(n), positive(n);
  std::vector<int> predicted(n);
  parallel_for(n, threads, [&](std::size_t i) {
    const auto state = model::forward(docs[i], p, hp, model::Mode::Eval);
    const model::Vec logits = model::classify(state.head_input(), p);
    losses[i] = diff::loss(logits, docs[i].label, loss);
    predicted[i] = model::predict(logits);
    if (hp.num_classes == 2) positive[i] = model::probabilities(logits)[1];
  });

  Metrics m;
  m.num_docs = n;
  m.confusion.assign(hp.num_classes, std::vector<std::size_t>(hp.num_classes, 0));
  std::size_t correct = 0;
  double total_loss = 0.0;
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = docs[i].label;
    correct += predicted[i] == docs[i].label;
    total_loss += losses[i];
    m.confusion.at(static_cast<std::size_t>(docs[i].label)).at(static_cast<std::size_t>(predicted[i])) += 1;
  }
  if (n > 0) {
    m.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    m.mean_loss = total_loss / static_cast<double>(n);
  }
  if (hp.num_classes == 2) {
    const bool both = std::count(labels.begin(), labels.end(), 1) > 0 &&
                      std::count(labels.begin(), labels.end(), 0) > 0;
    if (both) m.auc = auc(positive, labels);
  }
  return m;
}

void write_history_csv(std::ostream& out, const std::vector<HistoryRow>& history) {
  auto num = [](double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return std::string(buf);
  };
  out << "batch,train_loss,val_accuracy,val_auc\n";
  for (const auto& r : history) {
    out << r.batch << ',' << num(r.train_loss) << ',' << (r.val_accuracy ? num(*r.val_accuracy) : "") << ','
        << (r.val_auc ? num(*r.val_auc) : "") << '\n';
  }
}

// ---------------------------------------------------------------------------
// Training loop

TrainResult train(const std::vector<Document>& train_docs, std::size_t vocab_size,
                  const std::vector<Document>* validation, const TrainConfig& cfg, std::ostream* progress) {
  cfg.validate();
  if (train_docs.empty()) throw TrainError("training corpus is empty");
  const auto& hp = cfg.hp;

  TrainResult result;
  ModelParams params = model::init_params(hp, vocab_size, Rng::derive(cfg.seed, 0));
  result.best_params = params;
  AdamMoments moments = AdamMoments::zeros_like(params);
  BatchSampler sampler(train_docs.size(), Rng::derive(cfg.seed, 1));
  const std::uint64_t dropout_seed = Rng::derive(cfg.seed, 2);

  const bool have_val = validation != nullptr && !validation->empty();
  double best_score = -1.0;
  double interval_loss = 0.0;
  std::size_t interval_batches = 0;
  Gradients batch_grad = Gradients::zeros_like(params);

  for (std::size_t b = 1; b <= cfg.num_batches; ++b) {
    const auto batch = sampler.next(cfg.batch_size);
    std::vector<diff::DocGradients> per_doc(batch.size());
    parallel_for(batch.size(), cfg.threads, [&](std::size_t j) {
      Rng rng = Rng::stream(Rng::derive(dropout_seed, b), j);
      const Document& doc = train_docs[batch[j]];
      const auto state = model::forward(doc, params, hp, model::Mode::Train, &rng);
      per_doc[j] = diff::backward_sparse(state, params, hp, doc.label, cfg.loss);
    });

    batch_grad.set_zero();
    double batch_loss = 0.0;
    const double scale = 1.0 / static_cast<double>(batch.size());
    for (const auto& g : per_doc) {
      g.add_to(batch_grad, scale);
      batch_loss += g.loss;
    }
    batch_loss *= scale;
    if (!std::isfinite(batch_loss) || !batch_grad.all_finite())
      throw TrainError("training diverged at batch " + std::to_string(b) + " (loss " +
                       std::to_string(batch_loss) + ")");
    adam_step(params, batch_grad, moments, cfg.adam);
    interval_loss += batch_loss;
    ++interval_batches;

    if (b % cfg.eval_every == 0 || b == cfg.num_batches) {
      HistoryRow row;
      row.batch = b;
      row.train_loss = interval_loss / static_cast<double>(interval_batches);
      interval_loss = 0.0;
      interval_batches = 0;
      if (have_val) {
        Metrics m = evaluate(params, *validation, hp, cfg.loss, cfg.threads);
        row.val_accuracy = m.accuracy;
        row.val_auc = m.auc;
        const double score = m.auc ? *m.auc : m.accuracy;
        if (score > best_score) {
          best_score = score;
          result.best_params = params;
          result.best_batch = b;
        }
      }
      if (progress != nullptr) {
        *progress << "batch " << b << " train_loss " << row.train_loss;
        if (row.val_accuracy) *progress << " val_accuracy " << *row.val_accuracy;
        if (row.val_auc) *progress << " val_auc " << *row.val_auc;
        *progress << '\n';
      }
      result.history.push_back(row);
    }
  }
  if (!have_val) {
    result.best_params = params;
    result.best_batch = cfg.num_batches;
  }
  result.final_params = std::move(params);
  return result;
}

}  // namespace conn::train
