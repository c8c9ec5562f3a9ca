#include "sequst/experiment.hpp"

#include <cmath>

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

namespace sequst {

SeedOutcome run_on_split(const CorpusSplit& split, const std::vector<Sentence>& test, const LabelScheme& scheme,
                         TrainingConfig config, std::uint64_t seed,
                         const std::optional<std::filesystem::path>& run_dir) {
  config.seed = seed;
  const SequenceLabeler base = initial_model(split, scheme, config);
  SelfTrainResult result = self_train(base, split, config, run_dir);
  SeedOutcome out;
  out.seed = seed;
  out.validation_f1 = result.best_val_f1;
  out.records = std::move(result.records);
  if (!test.empty()) {
    std::vector<TagSequence> gold;
    for (const auto& s : test) {
      if (!s.gold_tags) throw DataError("test sentence without gold tags");
      gold.push_back(*s.gold_tags);
    }
    out.test = evaluate_tags(gold, predict_all(result.model, test), scheme.num_classes());
  }
  if (run_dir) save_checkpoint(*run_dir / "final.json", result.model);
  spdlog::info("seed {} ({}): validation F1 {:.2f}, test F1 {:.2f}", seed, to_string(config.mode),
               100.0 * out.validation_f1, 100.0 * out.test.f1);
  return out;
}

SeedOutcome run_seed(const std::vector<Sentence>& corpus, const std::vector<Sentence>& test,
                     const LabelScheme& scheme, TrainingConfig config, std::uint64_t seed,
                     const std::optional<std::filesystem::path>& run_dir) {
  SplitResult split = greedy_kshot_split(corpus, scheme, config.shots, seed);
  for (const auto& w : split.warnings) spdlog::warn("split: {}", w);
  if (run_dir) save_split(*run_dir / "split", split, scheme, seed, config.shots);
  return run_on_split(split.split, test, scheme, std::move(config), seed, run_dir);
}

SweepSummary summarize(const std::vector<SeedOutcome>& outcomes) {
  SweepSummary s;
  if (outcomes.empty()) return s;
  const double n = static_cast<double>(outcomes.size());
  for (const auto& o : outcomes) s.mean_f1 += 100.0 * o.test.f1 / n;
  if (outcomes.size() > 1) {
    double ss = 0.0;
    for (const auto& o : outcomes) ss += (100.0 * o.test.f1 - s.mean_f1) * (100.0 * o.test.f1 - s.mean_f1);
    s.std_f1 = std::sqrt(ss / (n - 1.0));
  }
  return s;
}

std::string metrics_json(const TrainingConfig& config, const std::vector<SeedOutcome>& outcomes) {
  nlohmann::ordered_json j;
  j["mode"] = to_string(config.mode);
  j["head"] = to_string(config.head);
  j["config_hash"] = config_hash(config);
  auto& runs = j["runs"] = nlohmann::ordered_json::array();
  for (const auto& o : outcomes) {
    nlohmann::ordered_json r;
    r["seed"] = o.seed;
    r["validation_f1"] = 100.0 * o.validation_f1;
    r["precision"] = 100.0 * o.test.precision;
    r["recall"] = 100.0 * o.test.recall;
    r["f1"] = 100.0 * o.test.f1;
    r["gold_spans"] = o.test.gold_spans;
    r["predicted_spans"] = o.test.predicted_spans;
    r["correct_spans"] = o.test.correct_spans;
    r["tokens"] = o.test.tokens;
    std::vector<double> per_class;
    for (const auto& c : o.test.per_class) per_class.push_back(100.0 * c.f1);
    r["per_class_f1"] = per_class;
    r["iterations"] = o.records.size();
    runs.push_back(std::move(r));
  }
  const SweepSummary s = summarize(outcomes);
  j["mean_f1"] = s.mean_f1;
  j["std_f1"] = s.std_f1;
  return j.dump(2) + "\n";
}

std::string metrics_table(const TrainingConfig& config, const std::vector<SeedOutcome>& outcomes) {
  std::string out = fmt::format("mode {}  head {}\n", to_string(config.mode), to_string(config.head));
  out += fmt::format("{:>8} {:>8} {:>8} {:>8} {:>8}\n", "seed", "val F1", "P", "R", "F1");
  for (const auto& o : outcomes) {
    out += fmt::format("{:>8} {:>8.2f} {:>8.2f} {:>8.2f} {:>8.2f}\n", o.seed, 100.0 * o.validation_f1,
                       100.0 * o.test.precision, 100.0 * o.test.recall, 100.0 * o.test.f1);
  }
  const SweepSummary s = summarize(outcomes);
  out += fmt::format("F1 = {:.2f} ± {:.2f}\n", s.mean_f1, s.std_f1);
  return out;
}

}  // namespace sequst
