#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "conn/corpus.hpp"

namespace fs = std::filesystem;
using namespace conn;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("conn_corpus_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

}  // namespace

TEST(Porter, ReferenceVocabulary) {
  const std::map<std::string, std::string> golden = {
      {"caresses", "caress"},   {"ponies", "poni"},         {"ties", "ti"},
      {"caress", "caress"},     {"cats", "cat"},            {"feed", "feed"},
      {"agreed", "agre"},       {"plastered", "plaster"},   {"bled", "bled"},
      {"motoring", "motor"},    {"sing", "sing"},           {"conflated", "conflat"},
      {"troubled", "troubl"},   {"sized", "size"},          {"hopping", "hop"},
      {"tanned", "tan"},        {"falling", "fall"},        {"hissing", "hiss"},
      {"fizzed", "fizz"},       {"failing", "fail"},        {"filing", "file"},
      {"happy", "happi"},       {"sky", "sky"},             {"relational", "relat"},
      {"conditional", "condit"}, {"rational", "ration"},    {"valenci", "valenc"},
      {"hesitanci", "hesit"},   {"digitizer", "digit"},     {"conformabli", "conform"},
      {"radicalli", "radic"},   {"differentli", "differ"},  {"vileli", "vile"},
      {"analogousli", "analog"}, {"vietnamization", "vietnam"}, {"predication", "predic"},
      {"operator", "oper"},     {"feudalism", "feudal"},    {"decisiveness", "decis"},
      {"hopefulness", "hope"},  {"callousness", "callous"}, {"formaliti", "formal"},
      {"sensitiviti", "sensit"}, {"sensibiliti", "sensibl"}, {"triplicate", "triplic"},
      {"formative", "form"},    {"formalize", "formal"},    {"electriciti", "electr"},
      {"electrical", "electr"}, {"hopeful", "hope"},        {"goodness", "good"},
      {"revival", "reviv"},     {"allowance", "allow"},     {"inference", "infer"},
      {"airliner", "airlin"},   {"gyroscopic", "gyroscop"}, {"adjustable", "adjust"},
      {"defensible", "defens"}, {"irritant", "irrit"},      {"replacement", "replac"},
      {"adjustment", "adjust"}, {"dependent", "depend"},    {"adoption", "adopt"},
      {"homologou", "homolog"}, {"communism", "commun"},    {"activate", "activ"},
      {"angulariti", "angular"}, {"homologous", "homolog"}, {"effective", "effect"},
      {"bowdlerize", "bowdler"}, {"probate", "probat"},     {"rate", "rate"},
      {"cease", "ceas"},        {"controll", "control"},    {"roll", "roll"},
      {"generalizations", "gener"}, {"oscillators", "oscil"}, {"archaeology", "archaeolog"},
      {"logical", "logic"},
  };
  for (const auto& [word, stem] : golden) EXPECT_EQ(porter_stem(word), stem) << word;
}

TEST(Porter, ShortWordsUnchanged) {
  EXPECT_EQ(porter_stem("is"), "is");
  EXPECT_EQ(porter_stem("a"), "a");
  EXPECT_EQ(porter_stem(""), "");
}

TEST(Tokenize, EmptyInput) { EXPECT_TRUE(tokenize("", PipelineConfig{}).empty()); }

TEST(Tokenize, AllStopwords) { EXPECT_TRUE(tokenize("The the THE", PipelineConfig{}).empty()); }

TEST(Tokenize, GoldenSentence) {
  const std::vector<std::string> expected = {"dog", "run", "dog", "ran"};
  EXPECT_EQ(tokenize("Dogs running, dogs ran!", PipelineConfig{}), expected);
}

TEST(Tokenize, PunctuationIsDeleted) {
  const std::vector<std::string> expected = {"stopbeliev", "430", "pm"};
  EXPECT_EQ(tokenize("Don't stop-believing: it's 4:30 PM", PipelineConfig{}), expected);
}

TEST(Tokenize, TokensContainNoPunctuation) {
  PipelineConfig cfg;
  const auto tokens = tokenize("a.b, c!d? (e) [f] {g} \"h\" 'i' x-y_z", cfg);
  for (const auto& t : tokens) {
    EXPECT_FALSE(t.empty());
    for (char ch : t) EXPECT_EQ(cfg.punctuation.find(ch), std::string::npos) << t;
  }
}

TEST(Tokenize, IdempotentWithoutStemming) {
  PipelineConfig cfg;
  cfg.stem = false;
  const std::string text = "Graphics cards, Windows drivers; and THE motherboard's BIOS!";
  const auto once = tokenize(text, cfg);
  std::string joined;
  for (const auto& t : once) joined += t + " ";
  EXPECT_EQ(tokenize(joined, cfg), once);
}

TEST(Tokenize, CustomStopwordsAndNoLowercase) {
  PipelineConfig cfg;
  cfg.use_default_stopwords = false;
  cfg.stopwords = {"foo"};
  cfg.stem = false;
  cfg.lowercase = false;
  const std::vector<std::string> expected = {"Bar", "the"};
  EXPECT_EQ(tokenize("foo Bar the", cfg), expected);
}

TEST(Vocabulary, MinCountFilters) {
  const auto v = build_vocabulary({{"a", "a", "b"}}, 2);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v.token_of(0), "a");
}

TEST(Vocabulary, DistinctTokensAtMinCountOne) {
  const auto v = build_vocabulary({{"x", "y"}, {"y", "z", "z"}}, 1);
  EXPECT_EQ(v.size(), 3u);
}

TEST(Vocabulary, CountThenLexicographicOrder) {
  const auto v = build_vocabulary({{"b", "b", "b", "a", "a", "a", "c", "d", "d", "d", "d"}}, 1);
  EXPECT_EQ(v.token_of(0), "d");
  EXPECT_EQ(v.token_of(1), "a");
  EXPECT_EQ(v.token_of(2), "b");
  EXPECT_EQ(v.token_of(3), "c");
  EXPECT_EQ(*v.id_of("a"), 1u);
  EXPECT_FALSE(v.id_of("zz").has_value());
}

TEST(Vocabulary, EmptyIsFatal) { EXPECT_THROW(build_vocabulary({{"a"}}, 2), CorpusError); }

TEST(Encode, DropsOutOfVocabulary) {
  const Vocabulary v({"a"});
  const auto d = encode({"a", "zz", "a"}, v, 1);
  EXPECT_EQ(d.word_ids, (std::vector<std::uint32_t>{0, 0}));
  EXPECT_EQ(d.label, 1);
}

TEST(Encode, AllOutOfVocabularyRejected) {
  const Vocabulary v({"a"});
  EXPECT_THROW(encode({"q", "r"}, v, 0), EmptyAfterEncoding);
}

TEST(Encode, LengthPreservedAndCapped) {
  const Vocabulary v({"a", "b"});
  EXPECT_EQ(encode({"a", "b", "a"}, v, 0).size(), 3u);
  EXPECT_EQ(encode({"a", "b", "a"}, v, 0, 2).size(), 2u);
}

TEST(Encode, NoTokensLostAtMinCountOne) {
  const std::vector<std::vector<std::string>> docs = {{"x", "y", "x"}, {"z"}, {"y", "w"}};
  const auto v = build_vocabulary(docs, 1);
  for (const auto& d : docs) EXPECT_EQ(encode(d, v, 0).size(), d.size());
}

TEST(Kfold, EqualFolds) {
  const auto f = kfold(std::vector<int>(10, 0), 5, 7);
  for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(f.members(k).size(), 2u);
}

TEST(Kfold, Deterministic) {
  std::vector<int> labels = {0, 1, 0, 1, 1, 0, 0, 0, 1, 0, 1, 1};
  EXPECT_EQ(kfold(labels, 3, 11).fold_of, kfold(labels, 3, 11).fold_of);
  EXPECT_NE(kfold(labels, 3, 11).fold_of, kfold(labels, 3, 12).fold_of);
}

TEST(Kfold, MinoritySpreadAcrossFolds) {
  const std::vector<int> labels = {0, 0, 0, 0, 0, 0, 0, 0, 1, 1};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto f = kfold(labels, 5, seed);
    std::vector<int> minority(5, 0), sizes(5, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      minority[f.fold_of[i]] += labels[i];
      sizes[f.fold_of[i]] += 1;
    }
    // two minority docs over five folds: no fold holds both
    EXPECT_LE(*std::max_element(minority.begin(), minority.end()), 1);
    EXPECT_EQ(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()), 0);
  }
}

TEST(Kfold, PartitionAndStratification) {
  std::vector<int> labels;
  for (int i = 0; i < 103; ++i) labels.push_back(i % 7 == 0 ? 2 : i % 3 == 0 ? 1 : 0);
  const std::size_t k = 5;
  const auto f = kfold(labels, k, 3);
  std::set<std::size_t> seen;
  std::size_t min_size = 1000, max_size = 0;
  for (std::size_t fold = 0; fold < k; ++fold) {
    const auto m = f.members(fold);
    min_size = std::min(min_size, m.size());
    max_size = std::max(max_size, m.size());
    for (auto i : m) EXPECT_TRUE(seen.insert(i).second);
    const auto c = f.complement(fold);
    EXPECT_EQ(m.size() + c.size(), labels.size());
  }
  EXPECT_EQ(seen.size(), labels.size());
  EXPECT_LE(max_size - min_size, 1u);
  for (int cls = 0; cls < 3; ++cls) {
    std::vector<int> per(k, 0);
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == cls) per[f.fold_of[i]]++;
    EXPECT_LE(*std::max_element(per.begin(), per.end()) - *std::min_element(per.begin(), per.end()), 1);
  }
}

TEST(Kfold, RejectsBadK) {
  EXPECT_THROW(kfold(std::vector<int>(3, 0), 4, 1), CorpusError);
  EXPECT_THROW(kfold(std::vector<int>(3, 0), 1, 1), CorpusError);
}

TEST(Loaders, NewsgroupsDirectory) {
  const auto root = scratch_dir("ng");
  for (const char* cat : {"sci.space", "rec.autos"}) {
    fs::create_directories(root / cat);
    for (int i = 0; i < 3; ++i)
      write_file(root / cat / std::to_string(i), std::string("orbit engine article number ") + cat);
  }
  const auto raw = load_newsgroups(root);
  EXPECT_EQ(raw.docs.size(), 6u);
  ASSERT_EQ(raw.labels.size(), 2u);
  EXPECT_EQ(raw.labels.name_of(0), "rec.autos");
  EXPECT_EQ(raw.labels.name_of(1), "sci.space");
  EXPECT_EQ(raw.docs.front().label, 0);
  EXPECT_EQ(raw.docs.back().label, 1);
  EXPECT_THROW(load_newsgroups(root / "missing"), CorpusError);
}

TEST(Loaders, CsvSkipsMalformedRow) {
  std::ostringstream text;
  text << "text,label\n";
  for (int i = 0; i < 100; ++i) {
    if (i == 41)
      text << "too,many,fields,1\n";
    else
      text << "\"document, number " << i << "\"," << (i % 2) << '\n';
  }
  std::istringstream in(text.str());
  const auto raw = load_csv(in);
  EXPECT_EQ(raw.docs.size(), 99u);
  EXPECT_EQ(raw.skipped, 1u);
  ASSERT_FALSE(raw.warnings.empty());
  EXPECT_NE(raw.warnings.front().find("line"), std::string::npos);
}

TEST(Loaders, CsvQuotedFieldsAndColumnOrder) {
  std::istringstream in("label,text\npos,\"he said \"\"hi\"\"\nand left\"\nneg,plain\n");
  const auto raw = load_csv(in);
  ASSERT_EQ(raw.docs.size(), 2u);
  EXPECT_EQ(raw.docs[0].text, "he said \"hi\"\nand left");
  EXPECT_EQ(raw.labels.name_of(raw.docs[0].label), "pos");
  EXPECT_EQ(raw.labels.name_of(raw.docs[1].label), "neg");
}

TEST(Loaders, CsvMissingFileOrHeader) {
  EXPECT_THROW(load_csv(fs::path("/nonexistent/file.csv")), CorpusError);
  std::istringstream in("a,b\n1,2\n");
  EXPECT_THROW(load_csv(in), CorpusError);
}

TEST(Labels, RoundTripAndNumericOrder) {
  const auto t = LabelTable::from_names({"10", "2", "1", "2"});
  EXPECT_EQ(t.names(), (std::vector<std::string>{"1", "2", "10"}));
  const auto dir = scratch_dir("labels");
  t.save(dir / "labels.txt");
  const auto back = LabelTable::load(dir / "labels.txt");
  EXPECT_EQ(back, t);
  EXPECT_EQ(back.hash(), t.hash());
  EXPECT_EQ(back.id_of("10"), 2);
}

TEST(CorpusFormat, RoundTripAndDeterminism) {
  RawCorpus raw;
  raw.labels = LabelTable({"neg", "pos"});
  raw.docs = {{"Great great movie", 1, "a"}, {"terrible movie", 0, "b"}, {"the", 0, "c"}};
  const auto res = preprocess(raw, PipelineConfig{});
  EXPECT_EQ(res.empty_dropped, 1u);
  EXPECT_EQ(res.corpus.num_docs(), 2u);
  std::ostringstream a, b;
  write_corpus(a, res.corpus);
  write_corpus(b, preprocess(raw, PipelineConfig{}).corpus);
  EXPECT_EQ(a.str(), b.str());
  std::istringstream in(a.str());
  const Corpus back = read_corpus(in);
  EXPECT_EQ(back.vocab.tokens(), res.corpus.vocab.tokens());
  EXPECT_EQ(back.labels, res.corpus.labels);
  ASSERT_EQ(back.docs.size(), 2u);
  EXPECT_EQ(back.docs[0].word_ids, res.corpus.docs[0].word_ids);
  EXPECT_EQ(back.docs[1].label, 0);
}

TEST(CorpusFormat, ReportsLineOfBadId) {
  std::istringstream in("conn-corpus\t1\nV\t1\nM\t1\nC\t1\nlabel\t0\tx\nvocab\t0\ta\ndocs\n0\t0 5\n");
  try {
    read_corpus(in);
    FAIL() << "expected CorpusError";
  } catch (const CorpusError& e) {
    EXPECT_NE(std::string(e.what()).find("line 8"), std::string::npos) << e.what();
  }
}
