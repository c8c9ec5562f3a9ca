#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "sequst/data.hpp"
#include "sequst/model.hpp"
#include "sequst/tensor.hpp"

namespace sequst {

/// Per-token class distributions from T stochastic passes, shape T×L×|Y|.
class McPredictions {
 public:
  McPredictions(Tensor probs, std::vector<std::uint64_t> seeds);

  std::size_t passes() const { return probs_.shape()[0]; }
  std::size_t length() const { return probs_.shape()[1]; }
  std::size_t classes() const { return probs_.shape()[2]; }
  const Tensor& probs() const { return probs_; }
  const std::vector<std::uint64_t>& seeds() const { return seeds_; }

  std::span<const double> row(std::size_t pass, std::size_t token) const;
  /// Posterior mean over passes. Computed as p⁰ + Σ_t (pᵗ − p⁰)/T so that
  /// identical passes reproduce p⁰ bit for bit.
  std::vector<double> mean(std::size_t token) const;

 private:
  Tensor probs_;
  std::vector<std::uint64_t> seeds_;
};

inline constexpr std::size_t kDefaultPasses = 20;

/// Runs `t_passes` dropout-active encodes with seeds derived from `seed` and
/// stacks the per-token distributions (softmax rows or CRF marginals).
McPredictions mc_predict(const SequenceLabeler& model, const Sentence& sentence, std::size_t t_passes,
                         std::uint64_t seed);

/// Argmax of the posterior mean per token, ties to the lowest class.
TagSequence pseudo_annotate(const McPredictions& mc);

/// Entropy of the mean minus the mean entropy, floored at 0.
double bald_score(const McPredictions& mc, std::size_t token);

/// Mean probability the passes assign to `pseudo`.
double confidence_score(const McPredictions& mc, std::size_t token, int pseudo);

/// 1 − bald / ln(num_classes), clamped to [0, 1].
double certainty_score(double bald, std::size_t num_classes);

/// Normalized products confidence × certainty. Falls back to uniform when every
/// product is zero; `fell_back` reports that case.
std::vector<double> sampling_weights(std::span<const double> confidence, std::span<const double> certainty,
                                     bool* fell_back = nullptr);

enum class SelectionMode { kWeighted, kTop };
std::string to_string(SelectionMode mode);
SelectionMode parse_selection_mode(std::string_view name);

/// Number of tokens kept for a sentence of length `length`: ⌈rho·L⌉.
std::size_t selection_budget(std::size_t length, double rho);

/// Binary mask with exactly selection_budget(L, rho) ones. Weighted mode draws
/// without replacement in proportion to `weights`; top mode keeps the largest
/// weights with ties to the lowest index.
std::vector<char> select_tokens(std::span<const double> weights, double rho, std::uint64_t seed,
                                SelectionMode mode);

/// Which scores enter the sampling weight. kNone keeps every token.
enum class ScoreStrategy { kNone, kConfidence, kCertainty, kBoth };
std::string to_string(ScoreStrategy strategy);

struct TokenSelection {
  int pseudo = 0;
  double bald = 0.0;
  double confidence = 0.0;
  double certainty = 0.0;
  double weight = 0.0;
  bool selected = false;
};

struct SelectionReport {
  std::vector<TokenSelection> tokens;
  std::size_t selected_count = 0;
  bool uniform_fallback = false;

  TagSequence pseudo_tags() const;
  std::vector<char> mask() const;
};

SelectionReport build_selection(const McPredictions& mc, double rho, std::uint64_t seed, SelectionMode mode,
                                ScoreStrategy strategy = ScoreStrategy::kBoth);

/// One JSON object per token: sentence id, position, token, pseudo tag, scores,
/// and the mask bit.
void write_selection_records(std::ostream& out, std::size_t sentence_id, const Sentence& sentence,
                             const SelectionReport& report, const LabelScheme& scheme);

}  // namespace sequst
