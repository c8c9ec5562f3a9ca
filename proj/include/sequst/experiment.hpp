#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sequst/config.hpp"
#include "sequst/data.hpp"
#include "sequst/metrics.hpp"
#include "sequst/selftrain.hpp"

namespace sequst {

struct SeedOutcome {
  std::uint64_t seed = 0;
  double validation_f1 = 0.0;
  MetricsReport test;
  std::vector<IterationRecord> records;
};

/// One seed: greedy K-shot split of `corpus`, fresh W_0, the configured mode,
/// then test evaluation of the returned model. `config.seed` is replaced by
/// `seed` for both the split and training.
SeedOutcome run_seed(const std::vector<Sentence>& corpus, const std::vector<Sentence>& test,
                     const LabelScheme& scheme, TrainingConfig config, std::uint64_t seed,
                     const std::optional<std::filesystem::path>& run_dir = std::nullopt);

/// The same on an existing split.
SeedOutcome run_on_split(const CorpusSplit& split, const std::vector<Sentence>& test, const LabelScheme& scheme,
                         TrainingConfig config, std::uint64_t seed,
                         const std::optional<std::filesystem::path>& run_dir = std::nullopt);

struct SweepSummary {
  double mean_f1 = 0.0;  // test F1 in percent
  double std_f1 = 0.0;   // sample standard deviation, 0 for one seed
};

SweepSummary summarize(const std::vector<SeedOutcome>& outcomes);

/// Deterministic JSON metrics document: config hash, per-seed scores and the
/// mean ± std. Contains no timestamps.
std::string metrics_json(const TrainingConfig& config, const std::vector<SeedOutcome>& outcomes);

/// Human-readable table of the same.
std::string metrics_table(const TrainingConfig& config, const std::vector<SeedOutcome>& outcomes);

}  // namespace sequst
