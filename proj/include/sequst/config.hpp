#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sequst/losses.hpp"
#include "sequst/model.hpp"
#include "sequst/uncertainty.hpp"

namespace sequst {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class TrainMode { kSequst, kSst, kSupervisedOnly };
std::string to_string(TrainMode mode);
TrainMode parse_mode(std::string_view name);

/// Every knob of a run. Defaults follow the published search space where it
/// applies at this scale; values outside it are accepted with a warning.
struct TrainingConfig {
  TrainMode mode = TrainMode::kSequst;

  // Model.
  HeadKind head = HeadKind::kSoftmax;
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 32;
  double dropout = 0.1;
  std::size_t max_length = 64;

  // Optimizer (AdamW with linear warmup then linear decay).
  double learning_rate = 2e-2;
  double warmup_rate = 0.1;
  double weight_decay = 0.01;
  double grad_clip = 5.0;
  std::size_t batch_size = 8;
  int teacher_epochs = 30;
  int student_epochs = 3;

  // Uncertainty-aware selection.
  std::size_t t_passes = 20;
  double rho = 0.5;
  SelectionMode selection_mode = SelectionMode::kWeighted;

  // Robust student objective.
  RobustLossConfig loss;

  // Self-training loop.
  int max_iterations = 5;
  int patience = 2;
  bool student_uses_labeled = false;

  /// Seed of the current run; `seeds` is the sweep a multi-seed command runs.
  std::uint64_t seed = 42;
  std::vector<std::uint64_t> seeds = {12, 21, 42, 87, 100};
  int shots = 10;

  /// Throws ConfigError naming the field and its constraint. Returns warnings
  /// for values outside the published search space.
  std::vector<std::string> validate() const;

  ModelConfig model_config() const;

  /// Sets one field from its textual form; unknown keys throw ConfigError.
  void set(std::string_view key, std::string_view value);
  /// Flat `key = value` lines, one per field, in a fixed order.
  std::string to_text() const;
};

TrainingConfig parse_config(std::string_view text);
TrainingConfig load_config(const std::filesystem::path& path);

/// FNV-1a of the resolved config text, for run metadata.
std::string config_hash(const TrainingConfig& config);

}  // namespace sequst
