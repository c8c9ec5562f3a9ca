// Command-line front end: corpus generation, splitting, training,
// evaluation and selection analysis.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "sequst/analysis.hpp"
#include "sequst/config.hpp"
#include "sequst/data.hpp"
#include "sequst/experiment.hpp"
#include "sequst/metrics.hpp"
#include "sequst/model.hpp"
#include "sequst/numerics.hpp"

namespace fs = std::filesystem;
using namespace sequst;

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::vector<Sentence> read_corpus(const fs::path& path, const LabelScheme& scheme, std::size_t max_length) {
  ParseResult r = parse_conll(read_text(path), scheme, max_length);
  for (const auto& w : r.warnings) spdlog::warn("{}: {}", path.string(), w);
  return std::move(r.sentences);
}

// Training flags shared by `train` and `selftrain`. Each one set on the
// command line overrides the config file.
struct TrainFlags {
  std::string config_path;
  std::vector<std::uint64_t> seeds;
  std::map<std::string, std::string> overrides;
  std::string corpus, split_dir, test, out = "runs";
};

void add_override(CLI::App* cmd, TrainFlags& f, const std::string& flag, const std::string& key,
                  const std::string& help) {
  cmd->add_option_function<std::string>(flag, [&f, key](const std::string& v) { f.overrides[key] = v; }, help);
}

void add_train_flags(CLI::App* cmd, TrainFlags& f, bool with_mode) {
  cmd->add_option("--config", f.config_path, "Key-value config file");
  cmd->add_option("--seed", f.seeds, "Seed (repeatable); defaults to the config's seed list");
  if (with_mode) add_override(cmd, f, "--mode", "mode", "sequst | sst | supervised_only");
  add_override(cmd, f, "--head", "head", "softmax | crf");
  add_override(cmd, f, "--shots", "shots", "Entities per class in the labeled split");
  add_override(cmd, f, "--rho", "rho", "Fraction of tokens selected per sentence");
  add_override(cmd, f, "--t-passes", "t_passes", "MC dropout passes");
  add_override(cmd, f, "--tau", "tau", "PHCE threshold");
  add_override(cmd, f, "--lambda", "lambda", "Consistency weight");
  add_override(cmd, f, "--k-perturb", "k_perturb", "Gaussian perturbations per token");
  add_override(cmd, f, "--teacher-epochs", "teacher_epochs", "Epochs of labeled fine-tuning");
  add_override(cmd, f, "--student-epochs", "student_epochs", "Epochs of student training");
  add_override(cmd, f, "--max-iterations", "max_iterations", "Self-training iteration cap");
  cmd->add_option("--corpus", f.corpus, "CoNLL corpus to split per seed");
  cmd->add_option("--split", f.split_dir, "Directory written by `split` (fixed split)");
  cmd->add_option("--test", f.test, "CoNLL test file");
  cmd->add_option("--out", f.out, "Output directory");
}

TrainingConfig resolve_config(const TrainFlags& f, std::optional<TrainMode> forced_mode) {
  TrainingConfig cfg = f.config_path.empty() ? TrainingConfig{} : load_config(f.config_path);
  for (const auto& [key, value] : f.overrides) cfg.set(key, value);
  if (forced_mode) cfg.mode = *forced_mode;
  if (!f.seeds.empty()) cfg.seeds = f.seeds;
  for (const auto& w : cfg.validate()) spdlog::warn("config: {}", w);
  return cfg;
}

int run_training(const TrainFlags& f, std::optional<TrainMode> forced_mode) {
  const TrainingConfig cfg = resolve_config(f, forced_mode);
  if (f.corpus.empty() == f.split_dir.empty()) throw std::invalid_argument("give exactly one of --corpus or --split");

  const fs::path out(f.out);
  fs::create_directories(out);
  write_text(out / "config.txt", cfg.to_text());

  std::vector<SeedOutcome> outcomes;
  if (!f.corpus.empty()) {
    const LabelScheme scheme = scan_conll_scheme(read_text(f.corpus));
    const auto corpus = read_corpus(f.corpus, scheme, cfg.max_length);
    const auto test = f.test.empty() ? std::vector<Sentence>{} : read_corpus(f.test, scheme, cfg.max_length);
    for (std::uint64_t seed : cfg.seeds) {
      outcomes.push_back(run_seed(corpus, test, scheme, cfg, seed, out / fmt::format("seed_{}", seed)));
    }
  } else {
    const fs::path dir(f.split_dir);
    const LabelScheme scheme = LabelScheme(load_split_manifest(dir).classes);
    const CorpusSplit split = load_split(dir, scheme, cfg.max_length);
    const auto test = f.test.empty() ? std::vector<Sentence>{} : read_corpus(f.test, scheme, cfg.max_length);
    for (std::uint64_t seed : cfg.seeds) {
      outcomes.push_back(run_on_split(split, test, scheme, cfg, seed, out / fmt::format("seed_{}", seed)));
    }
  }
  write_text(out / "metrics.json", metrics_json(cfg, outcomes));
  std::cout << metrics_table(cfg, outcomes);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty-aware self-training for few-shot sequence labeling"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace | debug | info | warn | error | off");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic tagging corpus and test set");
  SynthSettings synth_settings;
  std::uint64_t synth_seed = 7;
  int test_size = 500;
  std::string synth_out = "data";
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--classes", synth_settings.num_classes, "Entity classes");
  synth->add_option("--sentences", synth_settings.corpus_size, "Corpus sentences");
  synth->add_option("--test-sentences", test_size, "Test sentences");
  synth->add_option("--cue-rate", synth_settings.cue_rate, "Probability an entity is preceded by a cue word");
  synth->add_option("--decoy-rate", synth_settings.decoy_rate, "Probability of a cue word before a non-entity");
  synth->add_option("--out", synth_out, "Output directory");

  // split
  auto* split_cmd = app.add_subcommand("split", "Greedy K-shot split of a corpus");
  std::string split_corpus, split_out = "split";
  int split_shots = 10;
  std::uint64_t split_seed = 42;
  split_cmd->add_option("--corpus", split_corpus, "CoNLL corpus")->required();
  split_cmd->add_option("--shots", split_shots, "Entities per class");
  split_cmd->add_option("--seed", split_seed, "Split seed");
  split_cmd->add_option("--out", split_out, "Output directory");

  // train / selftrain
  TrainFlags train_flags, self_flags;
  auto* train = app.add_subcommand("train", "Supervised training on the labeled split only");
  add_train_flags(train, train_flags, false);
  auto* selftrain = app.add_subcommand("selftrain", "Self-training (sequst, sst or supervised_only)");
  add_train_flags(selftrain, self_flags, true);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Entity-level F1 of predictions against gold");
  std::string eval_gold, eval_pred, eval_ckpt;
  evaluate->add_option("--gold", eval_gold, "Gold CoNLL file")->required();
  evaluate->add_option("--pred", eval_pred, "Predicted CoNLL file");
  evaluate->add_option("--checkpoint", eval_ckpt, "Model checkpoint to predict with");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Selection error rates of each scoring strategy");
  std::string an_ckpt, an_data, an_out = "analysis";
  double an_rho = 0.5;
  std::size_t an_passes = 20;
  std::uint64_t an_seed = 42;
  std::string an_mode = "weighted";
  analyze->add_option("--checkpoint", an_ckpt, "Teacher checkpoint")->required();
  analyze->add_option("--data", an_data, "CoNLL file with gold tags (treated as unlabeled)")->required();
  analyze->add_option("--rho", an_rho, "Fraction of tokens selected per sentence");
  analyze->add_option("--t-passes", an_passes, "MC dropout passes");
  analyze->add_option("--seed", an_seed, "Seed for dropout masks and selection");
  analyze->add_option("--selection-mode", an_mode, "weighted | top");
  analyze->add_option("--out", an_out, "Output directory");

  // export-embeddings
  auto* embed = app.add_subcommand("export-embeddings", "Write per-token encoder states as JSON lines");
  std::string em_ckpt, em_data, em_out = "embeddings.jsonl";
  embed->add_option("--checkpoint", em_ckpt, "Model checkpoint")->required();
  embed->add_option("--data", em_data, "CoNLL file")->required();
  embed->add_option("--out", em_out, "Output file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    spdlog::set_level(spdlog::level::from_str(log_level));
    spdlog::set_pattern("[%l] %v");

    if (*synth) {
      SynthSettings test_settings = synth_settings;
      test_settings.corpus_size = test_size;
      const LabelScheme scheme = synth_scheme(synth_settings);
      const fs::path out(synth_out);
      fs::create_directories(out);
      write_conll_file(out / "corpus.conll", synth_corpus(synth_settings, synth_seed), scheme);
      write_conll_file(out / "test.conll", synth_corpus(test_settings, mix_seed(synth_seed, 1)), scheme);
      std::cout << fmt::format("wrote {} and {}\n", (out / "corpus.conll").string(), (out / "test.conll").string());
      return 0;
    }
    if (*split_cmd) {
      const LabelScheme scheme = scan_conll_scheme(read_text(split_corpus));
      const auto corpus = read_corpus(split_corpus, scheme, kDefaultMaxLength);
      const SplitResult r = greedy_kshot_split(corpus, scheme, split_shots, split_seed);
      for (const auto& w : r.warnings) spdlog::warn("split: {}", w);
      save_split(split_out, r, scheme, split_seed, split_shots);
      std::cout << fmt::format("labeled {}  validation {}  unlabeled {}\n", r.split.labeled().size(),
                               r.split.validation().size(), r.split.unlabeled().size());
      return 0;
    }
    if (*train) return run_training(train_flags, TrainMode::kSupervisedOnly);
    if (*selftrain) return run_training(self_flags, std::nullopt);

    if (*evaluate) {
      if (eval_pred.empty() == eval_ckpt.empty()) throw std::invalid_argument("give exactly one of --pred or --checkpoint");
      std::vector<TagSequence> gold, pred;
      std::size_t classes = 0;
      if (!eval_ckpt.empty()) {
        const SequenceLabeler model = load_checkpoint(eval_ckpt);
        const auto sentences = read_corpus(eval_gold, model.scheme(), kDefaultMaxLength);
        for (const auto& s : sentences) gold.push_back(*s.gold_tags);
        pred = predict_all(model, sentences);
        classes = model.scheme().num_classes();
      } else {
        const std::string gold_text = read_text(eval_gold), pred_text = read_text(eval_pred);
        const LabelScheme scheme = scan_conll_scheme(gold_text + "\n\n" + pred_text);
        const auto g = parse_conll(gold_text, scheme, kDefaultMaxLength).sentences;
        const auto p = parse_conll(pred_text, scheme, kDefaultMaxLength).sentences;
        if (g.size() != p.size()) {
          throw DataError(fmt::format("gold has {} sentences, pred has {}", g.size(), p.size()));
        }
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (g[i].tokens != p[i].tokens) throw DataError(fmt::format("sentence {}: tokens differ", i + 1));
          gold.push_back(*g[i].gold_tags);
          pred.push_back(*p[i].gold_tags);
        }
        classes = scheme.num_classes();
      }
      const MetricsReport r = evaluate_tags(gold, pred, classes);
      std::cout << fmt::format("P = {:.2f}  R = {:.2f}  F1 = {:.2f}\n", 100.0 * r.precision, 100.0 * r.recall,
                               100.0 * r.f1);
      return 0;
    }

    if (*analyze) {
      if (!(an_rho > 0.0 && an_rho <= 1.0)) throw ConfigError(fmt::format("rho = {} violates 0 < rho <= 1", an_rho));
      if (an_passes == 0) throw ConfigError("t_passes = 0 violates t_passes >= 1");
      const SelectionMode mode = parse_selection_mode(an_mode);
      const SequenceLabeler model = load_checkpoint(an_ckpt);
      const auto sentences = read_corpus(an_data, model.scheme(), kDefaultMaxLength);
      std::vector<TagSequence> gold;
      for (const auto& s : sentences) gold.push_back(*s.gold_tags);
      const auto mc = mc_predict_all(model, sentences, an_passes, an_seed);
      const auto rates = selection_error_rates(mc, gold, an_rho, an_seed, mode);

      const fs::path out(an_out);
      fs::create_directories(out);
      nlohmann::ordered_json j;
      for (const auto& r : rates) {
        j[to_string(r.strategy)] = {{"selected", r.selected}, {"errors", r.errors}, {"error_rate", 100.0 * r.rate}};
        std::cout << fmt::format("{:<12} error rate {:6.2f}%  ({} of {} selected tokens)\n", to_string(r.strategy),
                                 100.0 * r.rate, r.errors, r.selected);
      }
      write_text(out / "error_rates.json", j.dump(2) + "\n");
      std::ofstream report(out / "selection_report.jsonl");
      for (std::size_t i = 0; i < sentences.size(); ++i) {
        const std::uint64_t s = mix_seed(an_seed, static_cast<std::uint64_t>(Stream::kSelection), i);
        write_selection_records(report, i, sentences[i], build_selection(mc[i], an_rho, s, mode, ScoreStrategy::kBoth),
                                model.scheme());
      }
      return 0;
    }

    if (*embed) {
      const SequenceLabeler model = load_checkpoint(em_ckpt);
      const auto sentences = read_corpus(em_data, model.scheme(), kDefaultMaxLength);
      const fs::path out(em_out);
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      std::ofstream file(out);
      if (!file) throw std::runtime_error("cannot write " + out.string());
      export_embeddings(file, model, sentences);
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
