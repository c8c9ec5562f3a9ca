#include "sequst/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "sequst/metrics.hpp"
#include "sequst/numerics.hpp"

namespace sequst {

LabelScheme::LabelScheme(std::vector<std::string> entity_classes) : classes_(std::move(entity_classes)) {
  tags_.push_back("O");
  for (const auto& c : classes_) {
    if (c.empty()) throw DataError("label scheme: empty entity class name");
    tags_.push_back("B-" + c);
    tags_.push_back("I-" + c);
  }
  for (std::size_t i = 0; i < tags_.size(); ++i) {
    if (!index_.emplace(tags_[i], static_cast<int>(i)).second) {
      throw DataError("label scheme: duplicate tag " + tags_[i]);
    }
  }
}

LabelScheme LabelScheme::from_tags(const std::vector<std::string>& tags) {
  std::vector<std::string> classes;
  std::set<std::string> seen;
  for (const auto& t : tags) {
    if (t == "O") continue;
    if (t.size() < 3 || (t[0] != 'B' && t[0] != 'I') || t[1] != '-') {
      throw DataError("label scheme: tag '" + t + "' is not in BIO form");
    }
    const std::string cls = t.substr(2);
    if (seen.insert(cls).second) classes.push_back(cls);
  }
  return LabelScheme(std::move(classes));
}

std::optional<int> LabelScheme::find(std::string_view tag) const {
  auto it = index_.find(std::string(tag));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int LabelScheme::index(std::string_view tag) const {
  if (auto i = find(tag)) return *i;
  throw DataError(fmt::format("tag '{}' is not in the label scheme", tag));
}

bool LabelScheme::valid_bio(const TagSequence& tags) const {
  int prev = outside();
  for (int t : tags) {
    if (t < 0 || static_cast<std::size_t>(t) >= size()) return false;
    if (is_inside(t)) {
      const int cls = class_of(t);
      if (prev == outside() || class_of(prev) != cls) return false;
    }
    prev = t;
  }
  return true;
}

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename OnLine>
void for_each_line(std::string_view text, OnLine&& on_line) {
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    on_line(++line_no, line);
    if (nl == text.size()) break;
    pos = nl + 1;
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

ParseResult parse_conll(std::string_view text, const LabelScheme& scheme, std::size_t max_length) {
  if (max_length == 0) throw DataError("parse_conll: max_length must be positive");
  ParseResult result;
  Sentence cur;
  cur.gold_tags.emplace();
  std::size_t start_line = 0;
  auto flush = [&]() {
    if (cur.tokens.empty()) return;
    if (cur.tokens.size() > max_length) {
      result.warnings.push_back(fmt::format("sentence starting at line {} truncated from {} to {} tokens",
                                            start_line, cur.tokens.size(), max_length));
      cur.tokens.resize(max_length);
      cur.gold_tags->resize(max_length);
    }
    result.sentences.push_back(std::move(cur));
    cur = Sentence{};
    cur.gold_tags.emplace();
  };
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    const auto cols = split_ws(line);
    if (cols.empty()) {
      flush();
      return;
    }
    if (cols.size() != 2) {
      throw DataError(fmt::format("line {}: expected 'token tag', found {} column(s)", line_no, cols.size()));
    }
    const auto tag = scheme.find(cols[1]);
    if (!tag) throw DataError(fmt::format("line {}: tag '{}' is not in the label scheme", line_no, cols[1]));
    if (cur.tokens.empty()) start_line = line_no;
    cur.tokens.emplace_back(cols[0]);
    cur.gold_tags->push_back(*tag);
  });
  flush();
  if (result.sentences.empty()) throw DataError("parse_conll: input contains no sentences");
  return result;
}

ParseResult read_conll_file(const std::filesystem::path& path, const LabelScheme& scheme,
                            std::size_t max_length) {
  try {
    return parse_conll(read_file(path), scheme, max_length);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

LabelScheme scan_conll_scheme(std::string_view text) {
  std::vector<std::string> tags;
  std::set<std::string> seen;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    const auto cols = split_ws(line);
    if (cols.empty()) return;
    if (cols.size() != 2) {
      throw DataError(fmt::format("line {}: expected 'token tag', found {} column(s)", line_no, cols.size()));
    }
    std::string t(cols[1]);
    if (t != "O" && t.size() > 2) {
      // Register both halves so class order follows first appearance.
      std::string b = "B-" + t.substr(2);
      if (seen.insert(b).second) tags.push_back(b);
    }
  });
  return LabelScheme::from_tags(tags);
}

std::string write_conll(const std::vector<Sentence>& sentences, const LabelScheme& scheme) {
  std::string out;
  for (const auto& s : sentences) {
    for (std::size_t j = 0; j < s.tokens.size(); ++j) {
      const int tag = s.gold_tags ? (*s.gold_tags)[j] : LabelScheme::outside();
      out += s.tokens[j];
      out += ' ';
      out += scheme.tag(tag);
      out += '\n';
    }
    out += '\n';
  }
  return out;
}

void write_conll_file(const std::filesystem::path& path, const std::vector<Sentence>& sentences,
                      const LabelScheme& scheme) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path.string());
  out << write_conll(sentences, scheme);
}

std::vector<std::size_t> entity_counts(const TagSequence& tags, std::size_t num_classes) {
  std::vector<std::size_t> counts(num_classes, 0);
  for (const auto& span : decode_spans(tags)) {
    if (static_cast<std::size_t>(span.cls) < num_classes) ++counts[span.cls];
  }
  return counts;
}

CorpusSplit::CorpusSplit(std::vector<Sentence> labeled, std::vector<Sentence> validation,
                         std::vector<Sentence> unlabeled_with_gold)
    : labeled_(std::move(labeled)), validation_(std::move(validation)) {
  unlabeled_.reserve(unlabeled_with_gold.size());
  unlabeled_gold_.reserve(unlabeled_with_gold.size());
  for (auto& s : unlabeled_with_gold) {
    unlabeled_gold_.push_back(s.gold_tags ? std::move(*s.gold_tags) : TagSequence{});
    s.gold_tags.reset();
    unlabeled_.push_back(std::move(s));
  }
}

SplitResult greedy_kshot_split(const std::vector<Sentence>& corpus, const LabelScheme& scheme, int k,
                               std::uint64_t seed) {
  if (k <= 0) throw DataError("greedy_kshot_split: k must be positive, got " + std::to_string(k));
  const std::size_t nc = scheme.num_classes();
  std::vector<std::vector<std::size_t>> counts(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (!corpus[i].gold_tags) {
      throw DataError(fmt::format("greedy_kshot_split: sentence {} has no gold tags", i));
    }
    counts[i] = entity_counts(*corpus[i].gold_tags, nc);
  }

  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = RandomStreams(seed).engine(Stream::kData);
  shuffle(order, rng);

  std::vector<char> used(corpus.size(), 0);
  const auto cap = static_cast<std::size_t>(k);
  auto draw = [&](std::vector<std::size_t>& totals) {
    std::vector<std::size_t> chosen;
    totals.assign(nc, 0);
    auto full = [&]() { return std::all_of(totals.begin(), totals.end(), [&](std::size_t c) { return c >= cap; }); };
    for (std::size_t idx : order) {
      if (nc == 0 || full()) break;
      if (used[idx]) continue;
      const auto& e = counts[idx];
      bool helps = false, fits = true;
      for (std::size_t c = 0; c < nc; ++c) {
        if (e[c] > 0 && totals[c] < cap) helps = true;
        if (totals[c] + e[c] > cap) fits = false;
      }
      if (!helps || !fits) continue;
      used[idx] = 1;
      chosen.push_back(idx);
      for (std::size_t c = 0; c < nc; ++c) totals[c] += e[c];
    }
    return chosen;
  };

  SplitResult result;
  const auto labeled_idx = draw(result.labeled_counts);
  const auto validation_idx = draw(result.validation_counts);
  auto note_shortfall = [&](const std::vector<std::size_t>& totals, const char* part) {
    for (std::size_t c = 0; c < nc; ++c) {
      if (totals[c] < cap) {
        result.warnings.push_back(fmt::format("{} set: class {} reached only {} of {} entities", part,
                                              scheme.classes()[c], totals[c], k));
      }
    }
  };
  note_shortfall(result.labeled_counts, "labeled");
  note_shortfall(result.validation_counts, "validation");

  std::vector<Sentence> labeled, validation, unlabeled;
  for (std::size_t i : labeled_idx) labeled.push_back(corpus[i]);
  for (std::size_t i : validation_idx) validation.push_back(corpus[i]);
  for (std::size_t i : order) {
    if (!used[i]) unlabeled.push_back(corpus[i]);
  }
  if (labeled.size() > unlabeled.size()) {
    throw DataError(fmt::format("greedy_kshot_split: labeled set ({}) larger than unlabeled set ({})",
                                labeled.size(), unlabeled.size()));
  }
  result.split = CorpusSplit(std::move(labeled), std::move(validation), std::move(unlabeled));
  return result;
}

void save_split(const std::filesystem::path& dir, const SplitResult& result, const LabelScheme& scheme,
                std::uint64_t seed, int k) {
  std::filesystem::create_directories(dir);
  const CorpusSplit& s = result.split;
  write_conll_file(dir / "labeled.conll", s.labeled(), scheme);
  write_conll_file(dir / "validation.conll", s.validation(), scheme);
  std::vector<Sentence> unlabeled = s.unlabeled();
  const auto& gold = s.quarantined_gold(AnalysisAccess{});
  for (std::size_t i = 0; i < unlabeled.size(); ++i) unlabeled[i].gold_tags = gold[i];
  write_conll_file(dir / "unlabeled.conll", unlabeled, scheme);

  nlohmann::ordered_json m;
  m["seed"] = seed;
  m["k"] = k;
  m["classes"] = scheme.classes();
  m["labeled_counts"] = result.labeled_counts;
  m["validation_counts"] = result.validation_counts;
  m["labeled_size"] = s.labeled().size();
  m["validation_size"] = s.validation().size();
  m["unlabeled_size"] = s.unlabeled().size();
  m["warnings"] = result.warnings;
  std::ofstream out(dir / "manifest.json");
  out << m.dump(2) << '\n';
}

CorpusSplit load_split(const std::filesystem::path& dir, const LabelScheme& scheme, std::size_t max_length) {
  auto labeled = read_conll_file(dir / "labeled.conll", scheme, max_length).sentences;
  auto validation = read_conll_file(dir / "validation.conll", scheme, max_length).sentences;
  auto unlabeled = read_conll_file(dir / "unlabeled.conll", scheme, max_length).sentences;
  return CorpusSplit(std::move(labeled), std::move(validation), std::move(unlabeled));
}

SplitManifest load_split_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw DataError("cannot open " + (dir / "manifest.json").string());
  const auto j = nlohmann::json::parse(in);
  SplitManifest m;
  m.seed = j.at("seed").get<std::uint64_t>();
  m.k = j.at("k").get<int>();
  m.classes = j.at("classes").get<std::vector<std::string>>();
  m.labeled_counts = j.at("labeled_counts").get<std::vector<std::size_t>>();
  m.validation_counts = j.at("validation_counts").get<std::vector<std::size_t>>();
  m.labeled_size = j.at("labeled_size").get<std::size_t>();
  m.validation_size = j.at("validation_size").get<std::size_t>();
  m.unlabeled_size = j.at("unlabeled_size").get<std::size_t>();
  return m;
}

namespace {

void validate(const SynthSettings& s) {
  auto bad = [](const std::string& what) { throw DataError("synth settings: " + what); };
  if (s.num_classes < 1) bad("num_classes must be at least 1");
  if (s.lexicon_size < 1) bad("lexicon_size must be at least 1");
  if (s.cues_per_class < 0) bad("cues_per_class must be non-negative");
  if (s.min_length < 1 || s.max_length < s.min_length) bad("need 1 <= min_length <= max_length");
  if (s.corpus_size < 0) bad("corpus_size must be non-negative");
  if (s.max_entities < 0) bad("max_entities must be non-negative");
  if (s.cue_rate < 0 || s.cue_rate > 1 || s.decoy_rate < 0 || s.decoy_rate > 1) bad("rates must lie in [0, 1]");
  const long reserved = static_cast<long>(s.num_classes) * (s.lexicon_size + s.cues_per_class);
  if (reserved >= s.vocab_size) {
    bad(fmt::format("lexicons and cues need {} words but vocab_size is {}", reserved, s.vocab_size));
  }
}

std::string class_name(int c) {
  static const char* kNames[] = {"PER", "LOC", "ORG", "MISC", "DATE", "TIME", "NUM", "EVT"};
  if (c < 8) return kNames[c];
  return "C" + std::to_string(c);
}

}  // namespace

LabelScheme synth_scheme(const SynthSettings& settings) {
  std::vector<std::string> classes;
  for (int c = 0; c < settings.num_classes; ++c) classes.push_back(class_name(c));
  return LabelScheme(std::move(classes));
}

std::vector<Sentence> synth_corpus(const SynthSettings& settings, std::uint64_t seed) {
  validate(settings);
  const int nc = settings.num_classes;
  const int background = settings.vocab_size - nc * (settings.lexicon_size + settings.cues_per_class);

  std::vector<double> lex_cdf(settings.lexicon_size);
  double acc = 0.0;
  for (int i = 0; i < settings.lexicon_size; ++i) {
    acc += 1.0 / std::pow(i + 1.0, settings.lexicon_skew);
    lex_cdf[i] = acc;
  }
  for (double& v : lex_cdf) v /= acc;

  auto rng = RandomStreams(seed).engine(Stream::kSynth);
  auto pick_int = [&](int lo, int hi) { return lo + static_cast<int>(uniform_index(rng, hi - lo + 1)); };
  auto lexicon_word = [&](int c) {
    const double u = uniform01(rng);
    const int i = static_cast<int>(std::lower_bound(lex_cdf.begin(), lex_cdf.end(), u) - lex_cdf.begin());
    return fmt::format("e{}_{}", c, std::min(i, settings.lexicon_size - 1));
  };
  auto cue_word = [&](int c) { return fmt::format("c{}_{}", c, pick_int(0, settings.cues_per_class - 1)); };
  auto background_word = [&]() { return fmt::format("w{}", pick_int(0, background - 1)); };

  std::vector<Sentence> corpus;
  corpus.reserve(settings.corpus_size);
  for (int n = 0; n < settings.corpus_size; ++n) {
    const int target = pick_int(settings.min_length, settings.max_length);
    const int entities = pick_int(0, settings.max_entities);
    // Segment plan: true marks an entity slot, false a background token.
    std::vector<char> plan(static_cast<std::size_t>(entities), 1);
    for (int i = 0; i < std::max(1, target - 2 * entities); ++i) plan.push_back(0);
    shuffle(plan, rng);

    Sentence s;
    s.gold_tags.emplace();
    auto emit = [&](std::string tok, int tag) {
      s.tokens.push_back(std::move(tok));
      s.gold_tags->push_back(tag);
    };
    for (char slot : plan) {
      if (slot) {
        const int c = pick_int(0, nc - 1);
        if (settings.cues_per_class > 0 && uniform01(rng) < settings.cue_rate) emit(cue_word(c), 0);
        const int span = pick_int(1, 3);
        for (int j = 0; j < span; ++j) {
          emit(lexicon_word(c), j == 0 ? LabelScheme::begin_of(c) : LabelScheme::inside_of(c));
        }
      } else {
        if (settings.cues_per_class > 0 && uniform01(rng) < settings.decoy_rate) emit(cue_word(pick_int(0, nc - 1)), 0);
        emit(background_word(), 0);
      }
    }
    if (s.tokens.size() > static_cast<std::size_t>(settings.max_length)) {
      s.tokens.resize(settings.max_length);
      s.gold_tags->resize(settings.max_length);
    }
    corpus.push_back(std::move(s));
  }
  return corpus;
}

}  // namespace sequst
