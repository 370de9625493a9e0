#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace conn {

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A document has no in-vocabulary tokens left after encoding.
class EmptyAfterEncoding : public CorpusError {
 public:
  using CorpusError::CorpusError;
};

// ---------------------------------------------------------------------------
// Tokenization

struct PipelineConfig {
  bool lowercase = true;
  std::string punctuation = R"(!"#$%&'()*+,-./:;<=>?@[\]^_`{|}~)";
  std::vector<std::string> stopwords;  // empty + use_default_stopwords -> shipped list
  bool use_default_stopwords = true;
  bool stem = true;
  std::size_t min_count = 1;
  std::size_t max_doc_length = 0;  // 0 = unlimited
};

/// Frozen English stopword list shipped with the library.
const std::vector<std::string>& default_stopwords();

/// Porter (1980) suffix stripper, reference-implementation variant.
std::string porter_stem(std::string_view word);

/// Tokenizer with the stopword set prepared once.
class Tokenizer {
 public:
  explicit Tokenizer(PipelineConfig cfg);
  std::vector<std::string> operator()(std::string_view raw) const;
  const PipelineConfig& config() const { return cfg_; }

 private:
  std::string normalize(std::string_view s) const;

  PipelineConfig cfg_;
  bool is_punct_[256] = {};
  std::unordered_set<std::string> stop_;
};

/// lowercase -> strip punctuation -> whitespace split -> drop stopwords -> stem.
std::vector<std::string> tokenize(std::string_view raw, const PipelineConfig& cfg);

// ---------------------------------------------------------------------------
// Vocabulary and encoding

class Vocabulary {
 public:
  Vocabulary() = default;
  /// Ids are assigned in the given order.
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  std::optional<std::uint32_t> id_of(const std::string& token) const;
  const std::string& token_of(std::uint32_t id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::uint32_t> ids_;
};

/// Keeps tokens with frequency >= min_count, ordered by descending count
/// with lexicographic tie-break. Throws CorpusError if nothing survives.
Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& docs,
                            std::size_t min_count);

struct Document {
  std::vector<std::uint32_t> word_ids;
  int label = 0;
  std::size_t size() const { return word_ids.size(); }
};

/// Drops out-of-vocabulary tokens; throws EmptyAfterEncoding when none remain.
Document encode(const std::vector<std::string>& tokens, const Vocabulary& vocab, int label,
                std::size_t max_length = 0);

// ---------------------------------------------------------------------------
// Labels and raw corpora

class LabelTable {
 public:
  LabelTable() = default;
  explicit LabelTable(std::vector<std::string> names);

  std::size_t size() const { return names_.size(); }
  int id_of(const std::string& name) const;
  const std::string& name_of(int id) const { return names_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& names() const { return names_; }
  /// FNV-1a over the names in id order; stored in checkpoints.
  std::uint64_t hash() const;

  /// Ids are assigned in sorted order; numerically when every name is an integer.
  static LabelTable from_names(const std::vector<std::string>& raw_labels);

  void save(const std::filesystem::path& path) const;
  static LabelTable load(const std::filesystem::path& path);

  bool operator==(const LabelTable&) const = default;

 private:
  std::vector<std::string> names_;
  std::map<std::string, int> ids_;
};

struct RawDocument {
  std::string text;
  int label = 0;
  std::string source;  // file name or "line N"
};

struct RawCorpus {
  std::vector<RawDocument> docs;
  LabelTable labels;
  std::size_t skipped = 0;
  std::vector<std::string> warnings;
};

/// One directory per category, one file per article. Categories and files
/// are visited in sorted name order.
RawCorpus load_newsgroups(const std::filesystem::path& root);

/// Header `text,label`; text may be quoted with "" escapes and embedded
/// newlines. Malformed rows are skipped and reported with their line number.
RawCorpus load_csv(const std::filesystem::path& path);
RawCorpus load_csv(std::istream& in);

// ---------------------------------------------------------------------------
// Encoded corpus

struct Corpus {
  Vocabulary vocab;
  LabelTable labels;
  std::vector<Document> docs;

  std::size_t num_docs() const { return docs.size(); }
  std::size_t num_classes() const { return labels.size(); }
  double mean_length() const;
  Corpus subset(const std::vector<std::size_t>& indices) const;
};

struct PreprocessResult {
  Corpus corpus;
  std::size_t empty_dropped = 0;
};

/// Tokenize, build the vocabulary, and encode. Documents that end up empty
/// are dropped and counted.
PreprocessResult preprocess(const RawCorpus& raw, const PipelineConfig& cfg);

/// Line-oriented text format:
///
///   conn-corpus<TAB>1
///   V<TAB>n  M<TAB>n  C<TAB>n                 (one per line)
///   label<TAB>id<TAB>name                     (C lines)
///   vocab<TAB>id<TAB>token                    (V lines)
///   docs
///   label<TAB>id id id ...                    (M lines)
void write_corpus(std::ostream& out, const Corpus& corpus);
void save_corpus(const std::filesystem::path& path, const Corpus& corpus);
Corpus read_corpus(std::istream& in);
Corpus load_corpus(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Cross-validation

struct FoldAssignment {
  std::size_t k = 0;
  std::vector<std::size_t> fold_of;

  std::vector<std::size_t> members(std::size_t fold) const;
  std::vector<std::size_t> complement(std::size_t fold) const;
};

/// Stratified shuffled round-robin: each class is shuffled and dealt into
/// folds continuing one shared counter, so fold sizes differ by at most one
/// and each class is spread within one document per fold.
FoldAssignment kfold(const std::vector<int>& labels, std::size_t k, std::uint64_t seed);
FoldAssignment kfold(const Corpus& corpus, std::size_t k, std::uint64_t seed);

}  // namespace conn
