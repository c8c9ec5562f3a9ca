#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sequst {

using TagSequence = std::vector<int>;

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// BIO tag inventory. Index 0 is O; entity class c owns B at 2c+1 and I at 2c+2.
class LabelScheme {
 public:
  LabelScheme() : LabelScheme(std::vector<std::string>{}) {}
  explicit LabelScheme(std::vector<std::string> entity_classes);
  /// Infers classes from a tag list such as {"O", "B-PER", "I-PER"}.
  static LabelScheme from_tags(const std::vector<std::string>& tags);

  std::size_t size() const { return tags_.size(); }
  std::size_t num_classes() const { return classes_.size(); }
  const std::vector<std::string>& tags() const { return tags_; }
  const std::vector<std::string>& classes() const { return classes_; }

  const std::string& tag(int index) const { return tags_.at(static_cast<std::size_t>(index)); }
  std::optional<int> find(std::string_view tag) const;
  int index(std::string_view tag) const;

  static constexpr int outside() { return 0; }
  static int begin_of(int cls) { return 2 * cls + 1; }
  static int inside_of(int cls) { return 2 * cls + 2; }
  static bool is_begin(int tag) { return tag > 0 && tag % 2 == 1; }
  static bool is_inside(int tag) { return tag > 0 && tag % 2 == 0; }
  /// Entity class of a B/I tag, −1 for O.
  static int class_of(int tag) { return tag == 0 ? -1 : (tag - 1) / 2; }

  /// Strict BIO validity: every I-X follows B-X or I-X.
  bool valid_bio(const TagSequence& tags) const;

  friend bool operator==(const LabelScheme& a, const LabelScheme& b) { return a.tags_ == b.tags_; }

 private:
  std::vector<std::string> classes_;
  std::vector<std::string> tags_;
  std::unordered_map<std::string, int> index_;
};

struct Sentence {
  std::vector<std::string> tokens;
  std::optional<TagSequence> gold_tags;

  std::size_t length() const { return tokens.size(); }
  friend bool operator==(const Sentence&, const Sentence&) = default;
};

struct ParseResult {
  std::vector<Sentence> sentences;
  std::vector<std::string> warnings;
};

inline constexpr std::size_t kDefaultMaxLength = 64;

/// Two-column `token tag` lines, blank-line separated sentences.
ParseResult parse_conll(std::string_view text, const LabelScheme& scheme,
                        std::size_t max_length = kDefaultMaxLength);
ParseResult read_conll_file(const std::filesystem::path& path, const LabelScheme& scheme,
                            std::size_t max_length = kDefaultMaxLength);
/// Collects the tag inventory of a file without validating against a scheme.
LabelScheme scan_conll_scheme(std::string_view text);

/// Sentences without gold tags are written with O in the tag column.
std::string write_conll(const std::vector<Sentence>& sentences, const LabelScheme& scheme);
void write_conll_file(const std::filesystem::path& path, const std::vector<Sentence>& sentences,
                      const LabelScheme& scheme);

/// Number of entity spans of each class in a tag sequence.
std::vector<std::size_t> entity_counts(const TagSequence& tags, std::size_t num_classes);

/// Token capable of reading quarantined gold tags. Only analysis code
/// (selection error rates, split persistence) constructs one.
struct AnalysisAccess {
  explicit AnalysisAccess() = default;
};

class CorpusSplit {
 public:
  CorpusSplit() = default;
  CorpusSplit(std::vector<Sentence> labeled, std::vector<Sentence> validation,
              std::vector<Sentence> unlabeled_with_gold);

  const std::vector<Sentence>& labeled() const { return labeled_; }
  const std::vector<Sentence>& validation() const { return validation_; }
  /// Unlabeled sentences; gold tags have been stripped.
  const std::vector<Sentence>& unlabeled() const { return unlabeled_; }
  const std::vector<TagSequence>& quarantined_gold(AnalysisAccess) const { return unlabeled_gold_; }

 private:
  std::vector<Sentence> labeled_;
  std::vector<Sentence> validation_;
  std::vector<Sentence> unlabeled_;
  std::vector<TagSequence> unlabeled_gold_;
};

struct SplitResult {
  CorpusSplit split;
  std::vector<std::size_t> labeled_counts;     // entities per class in D_l
  std::vector<std::size_t> validation_counts;  // entities per class in validation
  std::vector<std::string> warnings;
};

/// Seeded shuffle, then greedy admission: a sentence joins the labeled set iff
/// it holds an entity of a class still below k and admitting it keeps every
/// class count ≤ k. The validation set is drawn the same way from what is
/// left, and the remainder becomes unlabeled.
SplitResult greedy_kshot_split(const std::vector<Sentence>& corpus, const LabelScheme& scheme, int k,
                               std::uint64_t seed);

struct SplitManifest {
  std::uint64_t seed = 0;
  int k = 0;
  std::vector<std::string> classes;
  std::vector<std::size_t> labeled_counts;
  std::vector<std::size_t> validation_counts;
  std::size_t labeled_size = 0, validation_size = 0, unlabeled_size = 0;
};

void save_split(const std::filesystem::path& dir, const SplitResult& result, const LabelScheme& scheme,
                std::uint64_t seed, int k);
/// Reads labeled.conll / validation.conll / unlabeled.conll from `dir`.
CorpusSplit load_split(const std::filesystem::path& dir, const LabelScheme& scheme,
                       std::size_t max_length = kDefaultMaxLength);
SplitManifest load_split_manifest(const std::filesystem::path& dir);

/// Generator for a learnable tagging task. Entity class c draws span tokens
/// from its own lexicon; with probability `cue_rate` a class-specific cue word
/// precedes the span. Cue words also appear before background words at
/// `decoy_rate`, which makes context alone an imperfect signal.
struct SynthSettings {
  int num_classes = 5;
  int vocab_size = 400;
  int lexicon_size = 30;
  int cues_per_class = 2;
  int min_length = 5;
  int max_length = 15;
  int corpus_size = 2000;
  int max_entities = 3;
  double cue_rate = 0.8;
  double decoy_rate = 0.05;
  /// Zipf exponent for lexicon sampling; 0 is uniform.
  double lexicon_skew = 1.0;
};

std::vector<Sentence> synth_corpus(const SynthSettings& settings, std::uint64_t seed);
LabelScheme synth_scheme(const SynthSettings& settings);

}  // namespace sequst
