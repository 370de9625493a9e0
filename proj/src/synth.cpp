#include "conn/synth.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "conn/rng.hpp"

namespace conn::synth {

void LdaTrueModel::validate() const {
  const std::size_t K = alpha.size();
  if (K == 0) throw SynthError("model has no topics");
  if (beta.size() != K) throw SynthError("beta must have one row per topic");
  for (double a : alpha)
    if (!(a > 0.0) || !std::isfinite(a)) throw SynthError("alpha entries must be positive");
  const std::size_t V = beta.front().size();
  if (V == 0) throw SynthError("beta rows are empty");
  for (std::size_t k = 0; k < K; ++k) {
    if (beta[k].size() != V) throw SynthError("beta rows have different lengths");
    double sum = 0.0;
    for (double b : beta[k]) {
      if (!(b >= 0.0) || !std::isfinite(b)) throw SynthError("beta entries must be non-negative");
      sum += b;
    }
    if (sum == 0.0) throw SynthError("degenerate model: beta row " + std::to_string(k) + " is all zero");
    if (std::abs(sum - 1.0) > 1e-12)
      throw SynthError("beta row " + std::to_string(k) + " does not sum to 1");
  }
}

std::vector<double> LdaTrueModel::expected_unigram() const {
  double total = 0.0;
  for (double a : alpha) total += a;
  std::vector<double> out(vocab_size(), 0.0);
  for (std::size_t k = 0; k < alpha.size(); ++k)
    for (std::size_t v = 0; v < out.size(); ++v) out[v] += alpha[k] / total * beta[k][v];
  return out;
}

int Labeler::operator()(const std::vector<double>& theta) const {
  auto dot = [&theta](const std::vector<double>& w) {
    if (w.size() != theta.size()) throw SynthError("labeler dimension does not match K");
    double s = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) s += w[k] * theta[k];
    return s;
  };
  if (kind == Kind::Direction) return dot(direction) > 0.0 ? 1 : 0;
  if (prototypes.empty()) throw SynthError("labeler has no prototypes");
  int best = 0;
  double best_score = dot(prototypes[0]);
  for (std::size_t c = 1; c < prototypes.size(); ++c) {
    double s = dot(prototypes[c]);
    if (s > best_score) {
      best_score = s;
      best = static_cast<int>(c);
    }
  }
  return best;
}

std::size_t Labeler::num_classes() const {
  return kind == Kind::Direction ? 2 : prototypes.size();
}

SampledCorpus sample_corpus(const LdaTrueModel& model, std::size_t M, std::size_t N,
                            const Labeler& labeler, std::uint64_t seed) {
  model.validate();
  if (N == 0) throw SynthError("documents must have at least one word");
  const std::size_t K = model.num_topics();
  const std::size_t V = model.vocab_size();

  SampledCorpus out;
  std::vector<std::string> tokens;
  char buf[32];
  for (std::size_t v = 0; v < V; ++v) {
    std::snprintf(buf, sizeof buf, "w%03zu", v);
    tokens.emplace_back(buf);
  }
  out.corpus.vocab = Vocabulary(std::move(tokens));
  std::vector<std::string> names;
  for (std::size_t c = 0; c < labeler.num_classes(); ++c) names.push_back("class" + std::to_string(c));
  out.corpus.labels = LabelTable(std::move(names));

  out.corpus.docs.resize(M);
  out.latent.resize(M);
  for (std::size_t m = 0; m < M; ++m) {
    Rng rng = Rng::stream(seed, m);
    LatentRecord& rec = out.latent[m];
    rec.theta = K == 1 ? std::vector<double>{1.0} : rng.dirichlet(model.alpha);
    rec.z.resize(N);
    Document& doc = out.corpus.docs[m];
    doc.word_ids.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
      auto z = rng.categorical(rec.theta);
      rec.z[i] = static_cast<std::uint32_t>(z);
      doc.word_ids[i] = static_cast<std::uint32_t>(rng.categorical(model.beta[z]));
    }
    doc.label = labeler(rec.theta);
  }
  return out;
}

LdaTrueModel default_model(std::size_t V) {
  constexpr std::size_t K = 4;
  if (V < K) throw SynthError("default model needs V >= 4");
  constexpr double in_block = 20.0;
  LdaTrueModel model;
  model.alpha.assign(K, 0.5);
  const std::size_t block = V / K;
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<double> row(V, 1.0);
    for (std::size_t v = k * block; v < (k + 1) * block; ++v) row[v] = in_block;
    double total = 0.0;
    for (double x : row) total += x;
    for (double& x : row) x /= total;
    model.beta.push_back(std::move(row));
  }
  return model;
}

Labeler default_labeler() {
  Labeler l;
  l.kind = Labeler::Kind::Prototypes;
  l.prototypes = {{0.5, 0.5, 0.0, 0.0}, {0.0, 0.0, 0.5, 0.5}};
  return l;
}

void write_latent(std::ostream& out, const std::vector<LatentRecord>& latent) {
  char buf[40];
  for (std::size_t m = 0; m < latent.size(); ++m) {
    out << m << '\t';
    for (std::size_t k = 0; k < latent[m].theta.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", latent[m].theta[k]);
      out << (k ? " " : "") << buf;
    }
    out << '\t';
    for (std::size_t i = 0; i < latent[m].z.size(); ++i) out << (i ? " " : "") << latent[m].z[i];
    out << '\n';
  }
}

std::vector<LatentRecord> read_latent(std::istream& in) {
  std::vector<LatentRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto t1 = line.find('\t');
    auto t2 = line.find('\t', t1 == std::string::npos ? t1 : t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos) throw SynthError("malformed latent line");
    LatentRecord rec;
    std::istringstream thetas(line.substr(t1 + 1, t2 - t1 - 1));
    double x;
    while (thetas >> x) rec.theta.push_back(x);
    std::istringstream zs(line.substr(t2 + 1));
    std::uint32_t z;
    while (zs >> z) rec.z.push_back(z);
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace conn::synth
