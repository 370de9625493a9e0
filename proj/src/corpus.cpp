#include "conn/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "conn/rng.hpp"

namespace conn {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Tokenization

Tokenizer::Tokenizer(PipelineConfig cfg) : cfg_(std::move(cfg)) {
  for (unsigned char c : cfg_.punctuation) is_punct_[c] = true;
  const auto& words =
      cfg_.stopwords.empty() && cfg_.use_default_stopwords ? default_stopwords() : cfg_.stopwords;
  for (const auto& w : words) {
    // The stopword list passes through the same normalization as the text,
    // so "don't" also removes the stripped form "dont".
    stop_.insert(w);
    std::string n = normalize(w);
    if (!n.empty()) stop_.insert(std::move(n));
  }
}

std::string Tokenizer::normalize(std::string_view s) const {
  std::string out;
  out.reserve(s.size());
  for (char ch : s) {
    auto c = static_cast<unsigned char>(ch);
    if (is_punct_[c]) continue;
    if (cfg_.lowercase && c >= 'A' && c <= 'Z') c = static_cast<unsigned char>(c - 'A' + 'a');
    out.push_back(static_cast<char>(c));
  }
  return out;
}

std::vector<std::string> Tokenizer::operator()(std::string_view raw) const {
  std::string clean = normalize(raw);
  std::vector<std::string> tokens;
  std::size_t i = 0;
  const std::size_t n = clean.size();
  auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
  };
  while (i < n) {
    while (i < n && is_space(clean[i])) ++i;
    std::size_t start = i;
    while (i < n && !is_space(clean[i])) ++i;
    if (i == start) continue;
    std::string tok = clean.substr(start, i - start);
    if (stop_.contains(tok)) continue;
    if (cfg_.stem) tok = porter_stem(tok);
    if (!tok.empty()) tokens.push_back(std::move(tok));
  }
  return tokens;
}

std::vector<std::string> tokenize(std::string_view raw, const PipelineConfig& cfg) {
  return Tokenizer(cfg)(raw);
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  ids_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    auto [it, inserted] = ids_.emplace(tokens_[i], static_cast<std::uint32_t>(i));
    if (!inserted) throw CorpusError("duplicate vocabulary token: " + tokens_[i]);
  }
}

std::optional<std::uint32_t> Vocabulary::id_of(const std::string& token) const {
  auto it = ids_.find(token);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& docs,
                            std::size_t min_count) {
  if (min_count < 1) throw CorpusError("min_count must be >= 1");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& doc : docs)
    for (const auto& tok : doc) ++counts[tok];

  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, c] : counts)
    if (c >= min_count) kept.emplace_back(tok, c);
  if (kept.empty()) throw CorpusError("empty vocabulary (min_count=" + std::to_string(min_count) + ")");

  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> tokens;
  tokens.reserve(kept.size());
  for (auto& [tok, c] : kept) tokens.push_back(tok);
  return Vocabulary(std::move(tokens));
}

Document encode(const std::vector<std::string>& tokens, const Vocabulary& vocab, int label,
                std::size_t max_length) {
  Document doc;
  doc.label = label;
  for (const auto& tok : tokens) {
    if (max_length != 0 && doc.word_ids.size() >= max_length) break;
    if (auto id = vocab.id_of(tok)) doc.word_ids.push_back(*id);
  }
  if (doc.word_ids.empty()) throw EmptyAfterEncoding("document has no in-vocabulary tokens");
  return doc;
}

// ---------------------------------------------------------------------------
// Labels

LabelTable::LabelTable(std::vector<std::string> names) : names_(std::move(names)) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    auto [it, inserted] = ids_.emplace(names_[i], static_cast<int>(i));
    if (!inserted) throw CorpusError("duplicate label name: " + names_[i]);
  }
}

int LabelTable::id_of(const std::string& name) const {
  auto it = ids_.find(name);
  if (it == ids_.end()) throw CorpusError("unknown label: " + name);
  return it->second;
}

std::uint64_t LabelTable::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 0x100000001b3ULL;
  };
  for (const auto& n : names_) {
    for (unsigned char c : n) mix(c);
    mix(0);
  }
  return h;
}

namespace {

std::optional<long long> parse_integer(const std::string& s) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

}  // namespace

LabelTable LabelTable::from_names(const std::vector<std::string>& raw_labels) {
  std::vector<std::string> unique(raw_labels.begin(), raw_labels.end());
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  bool numeric = !unique.empty() && std::all_of(unique.begin(), unique.end(), [](const auto& s) {
    return parse_integer(s).has_value();
  });
  if (numeric) {
    std::sort(unique.begin(), unique.end(), [](const auto& a, const auto& b) {
      return *parse_integer(a) < *parse_integer(b);
    });
  }
  return LabelTable(std::move(unique));
}

void LabelTable::save(const fs::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("cannot write label table: " + path.string());
  for (const auto& n : names_) out << n << '\n';
}

LabelTable LabelTable::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot read label table: " + path.string());
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) names.push_back(line);
  return LabelTable(std::move(names));
}

// ---------------------------------------------------------------------------
// Loaders

RawCorpus load_newsgroups(const fs::path& root) {
  if (!fs::is_directory(root)) throw CorpusError("not a directory: " + root.string());
  std::vector<fs::path> categories;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && entry.path().filename().string().front() != '.')
      categories.push_back(entry.path());
  }
  if (categories.empty()) throw CorpusError("no category directories under " + root.string());
  std::sort(categories.begin(), categories.end());

  std::vector<std::string> names;
  for (const auto& c : categories) names.push_back(c.filename().string());
  RawCorpus raw;
  raw.labels = LabelTable(names);

  for (std::size_t ci = 0; ci < categories.size(); ++ci) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(categories[ci])) {
      if (entry.is_regular_file() && entry.path().filename().string().front() != '.')
        files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      std::ifstream in(f, std::ios::binary);
      if (!in) throw CorpusError("cannot read " + f.string());
      std::ostringstream buf;
      buf << in.rdbuf();
      raw.docs.push_back({buf.str(), static_cast<int>(ci),
                          categories[ci].filename().string() + "/" + f.filename().string()});
    }
  }
  return raw;
}

namespace {

struct CsvRecord {
  std::vector<std::string> fields;
  std::size_t line = 0;
  bool malformed = false;
  std::string problem;
};

// RFC 4180 reader over the whole buffer. A malformed record is resynced at
// the next physical newline.
class CsvReader {
 public:
  explicit CsvReader(std::string data) : data_(std::move(data)) {}

  bool next(CsvRecord& rec) {
    rec = CsvRecord{};
    // Skip blank lines.
    while (pos_ < data_.size() && (data_[pos_] == '\n' || data_[pos_] == '\r')) {
      if (data_[pos_] == '\n') ++line_;
      ++pos_;
    }
    if (pos_ >= data_.size()) return false;
    rec.line = line_;
    std::string field;
    for (;;) {
      if (pos_ < data_.size() && data_[pos_] == '"') {
        ++pos_;
        bool closed = false;
        while (pos_ < data_.size()) {
          char c = data_[pos_++];
          if (c == '"') {
            if (pos_ < data_.size() && data_[pos_] == '"') {
              field.push_back('"');
              ++pos_;
            } else {
              closed = true;
              break;
            }
          } else {
            if (c == '\n') ++line_;
            field.push_back(c);
          }
        }
        if (!closed) {
          rec.malformed = true;
          rec.problem = "unterminated quoted field";
          return true;
        }
        if (pos_ < data_.size() && data_[pos_] == '\r') ++pos_;
        if (pos_ < data_.size() && data_[pos_] != ',' && data_[pos_] != '\n') {
          rec.malformed = true;
          rec.problem = "unexpected character after closing quote";
          skip_line();
          return true;
        }
      } else {
        while (pos_ < data_.size() && data_[pos_] != ',' && data_[pos_] != '\n') {
          char c = data_[pos_++];
          if (c == '"') {
            rec.malformed = true;
            rec.problem = "quote inside unquoted field";
            skip_line();
            return true;
          }
          if (c != '\r') field.push_back(c);
        }
      }
      rec.fields.push_back(std::move(field));
      field.clear();
      if (pos_ >= data_.size()) return true;
      char sep = data_[pos_++];
      if (sep == '\n') {
        ++line_;
        return true;
      }
    }
  }

 private:
  void skip_line() {
    while (pos_ < data_.size() && data_[pos_] != '\n') ++pos_;
    if (pos_ < data_.size()) {
      ++pos_;
      ++line_;
    }
  }

  std::string data_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

}  // namespace

RawCorpus load_csv(std::istream& in) {
  std::ostringstream buf;
  buf << in.rdbuf();
  CsvReader reader(buf.str());

  CsvRecord rec;
  if (!reader.next(rec) || rec.malformed) throw CorpusError("CSV: missing header");
  std::ptrdiff_t text_col = -1, label_col = -1;
  for (std::size_t i = 0; i < rec.fields.size(); ++i) {
    if (rec.fields[i] == "text") text_col = static_cast<std::ptrdiff_t>(i);
    if (rec.fields[i] == "label") label_col = static_cast<std::ptrdiff_t>(i);
  }
  if (text_col < 0 || label_col < 0) throw CorpusError("CSV: header must name columns text,label");
  const std::size_t width = rec.fields.size();

  RawCorpus raw;
  std::vector<std::string> raw_labels;
  while (reader.next(rec)) {
    if (!rec.malformed && rec.fields.size() != width) {
      rec.malformed = true;
      rec.problem = "expected " + std::to_string(width) + " fields, got " +
                    std::to_string(rec.fields.size());
    }
    if (!rec.malformed && rec.fields[static_cast<std::size_t>(label_col)].empty()) {
      rec.malformed = true;
      rec.problem = "empty label";
    }
    if (rec.malformed) {
      ++raw.skipped;
      raw.warnings.push_back("line " + std::to_string(rec.line) + ": " + rec.problem);
      continue;
    }
    raw.docs.push_back({std::move(rec.fields[static_cast<std::size_t>(text_col)]), 0,
                        "line " + std::to_string(rec.line)});
    raw_labels.push_back(std::move(rec.fields[static_cast<std::size_t>(label_col)]));
  }
  raw.labels = LabelTable::from_names(raw_labels);
  for (std::size_t i = 0; i < raw.docs.size(); ++i) raw.docs[i].label = raw.labels.id_of(raw_labels[i]);
  return raw;
}

RawCorpus load_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot read " + path.string());
  return load_csv(in);
}

// ---------------------------------------------------------------------------
// Encoded corpus

double Corpus::mean_length() const {
  if (docs.empty()) return 0.0;
  std::size_t total = 0;
  for (const auto& d : docs) total += d.size();
  return static_cast<double>(total) / static_cast<double>(docs.size());
}

Corpus Corpus::subset(const std::vector<std::size_t>& indices) const {
  Corpus out{vocab, labels, {}};
  out.docs.reserve(indices.size());
  for (auto i : indices) out.docs.push_back(docs.at(i));
  return out;
}

PreprocessResult preprocess(const RawCorpus& raw, const PipelineConfig& cfg) {
  Tokenizer tokenizer(cfg);
  std::vector<std::vector<std::string>> tokenized;
  tokenized.reserve(raw.docs.size());
  for (const auto& d : raw.docs) {
    auto toks = tokenizer(d.text);
    if (cfg.max_doc_length != 0 && toks.size() > cfg.max_doc_length) toks.resize(cfg.max_doc_length);
    tokenized.push_back(std::move(toks));
  }
  PreprocessResult result;
  result.corpus.vocab = build_vocabulary(tokenized, cfg.min_count);
  result.corpus.labels = raw.labels;
  for (std::size_t i = 0; i < tokenized.size(); ++i) {
    try {
      result.corpus.docs.push_back(encode(tokenized[i], result.corpus.vocab, raw.docs[i].label));
    } catch (const EmptyAfterEncoding&) {
      ++result.empty_dropped;
    }
  }
  return result;
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
  out << "conn-corpus\t1\n";
  out << "V\t" << corpus.vocab.size() << '\n';
  out << "M\t" << corpus.docs.size() << '\n';
  out << "C\t" << corpus.labels.size() << '\n';
  for (std::size_t i = 0; i < corpus.labels.size(); ++i)
    out << "label\t" << i << '\t' << corpus.labels.names()[i] << '\n';
  for (std::size_t i = 0; i < corpus.vocab.size(); ++i)
    out << "vocab\t" << i << '\t' << corpus.vocab.tokens()[i] << '\n';
  out << "docs\n";
  for (const auto& d : corpus.docs) {
    out << d.label << '\t';
    for (std::size_t j = 0; j < d.word_ids.size(); ++j) {
      if (j) out << ' ';
      out << d.word_ids[j];
    }
    out << '\n';
  }
}

void save_corpus(const fs::path& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("cannot write " + path.string());
  write_corpus(out, corpus);
  if (!out) throw CorpusError("write failed: " + path.string());
}

namespace {

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  std::string next(const char* what) {
    std::string line;
    if (!std::getline(in_, line)) fail(std::string("unexpected end of file, expected ") + what);
    ++number_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  }
  bool try_next(std::string& line) {
    if (!std::getline(in_, line)) return false;
    ++number_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw CorpusError("corpus line " + std::to_string(number_) + ": " + msg);
  }

 private:
  std::istream& in_;
  std::size_t number_ = 0;
};

std::vector<std::string> split_tabs(const std::string& line, std::size_t max_parts) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (parts.size() + 1 < max_parts) {
    auto tab = line.find('\t', start);
    if (tab == std::string::npos) break;
    parts.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  parts.push_back(line.substr(start));
  return parts;
}

std::size_t parse_count(const LineReader& r, const std::string& s) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) r.fail("bad integer '" + s + "'");
  return v;
}

std::size_t header_field(LineReader& r, const char* key) {
  auto parts = split_tabs(r.next(key), 2);
  if (parts.size() != 2 || parts[0] != key) r.fail(std::string("expected ") + key);
  return parse_count(r, parts[1]);
}

std::vector<std::string> read_table(LineReader& r, const char* key, std::size_t n) {
  std::vector<std::string> names;
  names.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto parts = split_tabs(r.next(key), 3);
    if (parts.size() != 3 || parts[0] != key || parse_count(r, parts[1]) != i)
      r.fail(std::string("expected ") + key + " entry " + std::to_string(i));
    names.push_back(std::move(parts[2]));
  }
  return names;
}

}  // namespace

Corpus read_corpus(std::istream& in) {
  LineReader r(in);
  if (r.next("magic") != "conn-corpus\t1") r.fail("not a conn-corpus v1 file");
  const std::size_t V = header_field(r, "V");
  const std::size_t M = header_field(r, "M");
  const std::size_t C = header_field(r, "C");
  Corpus corpus;
  corpus.labels = LabelTable(read_table(r, "label", C));
  corpus.vocab = Vocabulary(read_table(r, "vocab", V));
  if (r.next("docs") != "docs") r.fail("expected 'docs'");
  corpus.docs.reserve(M);
  std::string line;
  while (r.try_next(line)) {
    if (line.empty()) continue;
    auto parts = split_tabs(line, 2);
    if (parts.size() != 2) r.fail("expected label<TAB>ids");
    Document d;
    d.label = static_cast<int>(parse_count(r, parts[0]));
    if (static_cast<std::size_t>(d.label) >= C) r.fail("label out of range");
    std::istringstream ids(parts[1]);
    std::string tok;
    while (ids >> tok) {
      auto id = parse_count(r, tok);
      if (id >= V) r.fail("word id out of range");
      d.word_ids.push_back(static_cast<std::uint32_t>(id));
    }
    if (d.word_ids.empty()) r.fail("empty document");
    corpus.docs.push_back(std::move(d));
  }
  if (corpus.docs.size() != M) r.fail("header says M=" + std::to_string(M) + " but found " +
                                      std::to_string(corpus.docs.size()) + " documents");
  return corpus;
}

Corpus load_corpus(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot read " + path.string());
  return read_corpus(in);
}

// ---------------------------------------------------------------------------
// Folds

std::vector<std::size_t> FoldAssignment::members(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] == fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldAssignment::complement(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] != fold) out.push_back(i);
  return out;
}

FoldAssignment kfold(const std::vector<int>& labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw CorpusError("kfold: k must be >= 2");
  if (k > labels.size()) throw CorpusError("kfold: k exceeds the number of documents");

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

  Rng rng(seed);
  FoldAssignment out;
  out.k = k;
  out.fold_of.assign(labels.size(), 0);
  std::size_t position = 0;
  for (auto& [label, members] : by_class) {
    rng.shuffle(members);
    for (auto doc : members) out.fold_of[doc] = position++ % k;
  }
  return out;
}

FoldAssignment kfold(const Corpus& corpus, std::size_t k, std::uint64_t seed) {
  std::vector<int> labels;
  labels.reserve(corpus.docs.size());
  for (const auto& d : corpus.docs) labels.push_back(d.label);
  return kfold(labels, k, seed);
}

}  // namespace conn
