#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <string>
#include <vector>

#include "sequst/data.hpp"
#include "test_support.hpp"

using namespace sequst;
using sequst::testing::sentence;

namespace {

const LabelScheme kScheme({"PER", "LOC", "ORG"});

std::string error_of(const std::string& text) {
  try {
    parse_conll(text, kScheme);
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("label scheme layout") {
  CHECK(kScheme.size() == 7);
  CHECK(kScheme.tag(0) == "O");
  CHECK(kScheme.index("B-LOC") == LabelScheme::begin_of(1));
  CHECK(kScheme.index("I-ORG") == LabelScheme::inside_of(2));
  CHECK(LabelScheme::class_of(kScheme.index("I-PER")) == 0);
  CHECK(LabelScheme::class_of(0) == -1);
  CHECK_FALSE(kScheme.find("B-DATE").has_value());

  const LabelScheme inferred = LabelScheme::from_tags({"O", "B-LOC", "I-LOC", "B-PER"});
  CHECK(inferred.classes() == std::vector<std::string>{"LOC", "PER"});
}

TEST_CASE("strict BIO validity") {
  CHECK(kScheme.valid_bio({1, 2, 0, 3, 4, 4}));
  CHECK_FALSE(kScheme.valid_bio({2, 0}));
  CHECK_FALSE(kScheme.valid_bio({1, 4}));
}

TEST_CASE("parse minimal input") {
  const ParseResult r = parse_conll("EU B-ORG\nrejects O\n\n", kScheme);
  REQUIRE(r.sentences.size() == 1);
  CHECK(r.sentences[0].tokens == std::vector<std::string>{"EU", "rejects"});
  CHECK(*r.sentences[0].gold_tags == TagSequence{kScheme.index("B-ORG"), 0});
}

TEST_CASE("parse blank-line separated blocks") {
  const ParseResult r = parse_conll("a O\nb B-PER\n\n\nc O\n", kScheme);
  CHECK(r.sentences.size() == 2);
  CHECK(r.sentences[1].tokens == std::vector<std::string>{"c"});
}

TEST_CASE("parse errors name the line") {
  CHECK(error_of("a O\nEU\n").find("line 2") != std::string::npos);
  CHECK(error_of("a O\nb B-DATE\n").find("line 2") != std::string::npos);
  CHECK(error_of("a O\nb B-DATE\n").find("B-DATE") != std::string::npos);
  CHECK_FALSE(error_of("").empty());
}

TEST_CASE("long sentences are truncated with a warning") {
  std::string text;
  for (int i = 0; i < 70; ++i) text += "w O\n";
  const ParseResult r = parse_conll(text, kScheme, 64);
  CHECK(r.sentences[0].length() == 64);
  CHECK(r.warnings.size() == 1);
}

TEST_CASE("conll write and parse round trip") {
  std::vector<Sentence> s{sentence({"a", "b", "c"}, {1, 2, 0}), sentence({"d"}, {5})};
  const auto back = parse_conll(write_conll(s, kScheme), kScheme).sentences;
  CHECK(back == s);
  CHECK(scan_conll_scheme(write_conll(s, kScheme)).classes() == std::vector<std::string>{"PER", "ORG"});
}

TEST_CASE("greedy split on single-entity sentences") {
  // Each sentence holds exactly one entity of one class; 4 per class.
  std::vector<Sentence> corpus;
  for (int rep = 0; rep < 4; ++rep)
    for (int c = 0; c < 3; ++c) corpus.push_back(sentence({"x", "y"}, {LabelScheme::begin_of(c), 0}));
  for (int rep = 0; rep < 10; ++rep) corpus.push_back(sentence({"z"}, {0}));

  const SplitResult r = greedy_kshot_split(corpus, kScheme, 2, 7);
  CHECK(r.split.labeled().size() == 6);
  CHECK(r.labeled_counts == std::vector<std::size_t>{2, 2, 2});
  CHECK(r.split.validation().size() == 6);
  CHECK(r.validation_counts == std::vector<std::size_t>{2, 2, 2});
  CHECK(r.split.unlabeled().size() == 10);
  CHECK(r.warnings.empty());
  for (const auto& s : r.split.unlabeled()) CHECK_FALSE(s.gold_tags.has_value());
  CHECK(r.split.quarantined_gold(AnalysisAccess{}).size() == 10);
}

TEST_CASE("greedy split caps a scarce class and warns") {
  std::vector<Sentence> corpus;
  for (int rep = 0; rep < 5; ++rep) corpus.push_back(sentence({"a"}, {LabelScheme::begin_of(0)}));
  corpus.push_back(sentence({"b"}, {LabelScheme::begin_of(1)}));
  for (int rep = 0; rep < 10; ++rep) corpus.push_back(sentence({"c", "d"}, {LabelScheme::begin_of(2), 0}));
  for (int rep = 0; rep < 20; ++rep) corpus.push_back(sentence({"z"}, {0}));

  const SplitResult r = greedy_kshot_split(corpus, kScheme, 3, 1);
  CHECK(r.labeled_counts == std::vector<std::size_t>{3, 1, 3});
  CHECK_FALSE(r.warnings.empty());
}

TEST_CASE("greedy split never exceeds k for any class") {
  const SynthSettings settings;
  const auto corpus = synth_corpus(settings, 3);
  const SplitResult r = greedy_kshot_split(corpus, synth_scheme(settings), 5, 11);
  for (std::size_t c : r.labeled_counts) CHECK(c <= 5);
  for (std::size_t c : r.validation_counts) CHECK(c <= 5);
}

TEST_CASE("greedy split is deterministic") {
  const SynthSettings settings;
  const auto corpus = synth_corpus(settings, 3);
  const auto a = greedy_kshot_split(corpus, synth_scheme(settings), 10, 4);
  const auto b = greedy_kshot_split(corpus, synth_scheme(settings), 10, 4);
  CHECK(a.split.labeled() == b.split.labeled());
  CHECK(a.split.unlabeled() == b.split.unlabeled());
  const auto c = greedy_kshot_split(corpus, synth_scheme(settings), 10, 5);
  CHECK_FALSE(a.split.labeled() == c.split.labeled());
}

TEST_CASE("split persistence round trip") {
  const SynthSettings settings;
  const LabelScheme scheme = synth_scheme(settings);
  const auto corpus = synth_corpus(settings, 8);
  const SplitResult r = greedy_kshot_split(corpus, scheme, 4, 2);
  const auto dir = std::filesystem::temp_directory_path() / "sequst_test_split";
  std::filesystem::remove_all(dir);
  save_split(dir, r, scheme, 2, 4);
  const CorpusSplit back = load_split(dir, scheme);
  CHECK(back.labeled() == r.split.labeled());
  CHECK(back.validation() == r.split.validation());
  CHECK(back.unlabeled() == r.split.unlabeled());
  CHECK(back.quarantined_gold(AnalysisAccess{}) == r.split.quarantined_gold(AnalysisAccess{}));
  const SplitManifest m = load_split_manifest(dir);
  CHECK(m.k == 4);
  CHECK(m.labeled_counts == r.labeled_counts);
  std::filesystem::remove_all(dir);
}

TEST_CASE("synthetic corpus") {
  SynthSettings settings;
  settings.vocab_size = 100;
  settings.lexicon_size = 8;
  const LabelScheme scheme = synth_scheme(settings);
  const auto corpus = synth_corpus(settings, 42);
  CHECK(corpus.size() == 2000);
  CHECK(scheme.num_classes() == 5);
  for (const auto& s : corpus) {
    CHECK(scheme.valid_bio(*s.gold_tags));
    CHECK(s.length() <= static_cast<std::size_t>(settings.max_length));
  }
  CHECK(synth_corpus(settings, 42) == corpus);
  CHECK_FALSE(synth_corpus(settings, 1) == synth_corpus(settings, 2));

  settings.corpus_size = 0;
  CHECK(synth_corpus(settings, 42).empty());
}
