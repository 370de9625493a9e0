#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <vector>

#include "conn/corpus.hpp"

namespace conn::synth {

class SynthError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Known LDA generative model: Dirichlet prior `alpha` over K topics and a
/// K x V row-stochastic topic-word matrix `beta`.
struct LdaTrueModel {
  std::vector<double> alpha;
  std::vector<std::vector<double>> beta;

  std::size_t num_topics() const { return alpha.size(); }
  std::size_t vocab_size() const { return beta.empty() ? 0 : beta.front().size(); }
  /// Throws SynthError on a non-positive alpha, ragged/negative beta, or a row
  /// that does not sum to one within 1e-12 (an all-zero row is degenerate).
  void validate() const;
  /// Expected unigram distribution (alpha / sum alpha)^T beta.
  std::vector<double> expected_unigram() const;
};

/// Maps a document's topic proportions to a class label.
struct Labeler {
  enum class Kind { Prototypes, Direction };
  Kind kind = Kind::Prototypes;
  /// Prototypes: label = argmax_c theta . prototypes[c] (lowest index on ties).
  std::vector<std::vector<double>> prototypes;
  /// Direction: label = 1 iff theta . direction > 0.
  std::vector<double> direction;

  int operator()(const std::vector<double>& theta) const;
  std::size_t num_classes() const;
};

struct LatentRecord {
  std::vector<double> theta;
  std::vector<std::uint32_t> z;
};

struct SampledCorpus {
  Corpus corpus;
  std::vector<LatentRecord> latent;
};

/// Draws M documents of N words each. Document m uses its own RNG stream
/// derived from (seed, m), so output is independent of evaluation order.
SampledCorpus sample_corpus(const LdaTrueModel& model, std::size_t M, std::size_t N,
                            const Labeler& labeler, std::uint64_t seed);

/// Default two-class benchmark: K=4 topics over V words, each topic
/// concentrated on its own block of V/4 words; class 0 is dominated by
/// topics {0,1}, class 1 by topics {2,3}.
LdaTrueModel default_model(std::size_t V = 100);
Labeler default_labeler();

/// Per-document line: doc_id<TAB>theta_0 ... theta_{K-1}<TAB>z_0 ... z_{N-1}
void write_latent(std::ostream& out, const std::vector<LatentRecord>& latent);
std::vector<LatentRecord> read_latent(std::istream& in);

}  // namespace conn::synth
