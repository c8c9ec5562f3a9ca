#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sequst/config.hpp"
#include "sequst/data.hpp"
#include "sequst/losses.hpp"
#include "sequst/metrics.hpp"
#include "sequst/model.hpp"
#include "sequst/uncertainty.hpp"

namespace sequst {

/// AdamW over every model parameter with linear warmup to the peak rate and
/// linear decay to zero at `total_steps`.
class AdamW {
 public:
  AdamW(SequenceLabeler& model, const TrainingConfig& config, std::size_t total_steps);

  /// Scales gradients by `grad_scale`, clips the global norm, updates, and
  /// clears gradients.
  void step(double grad_scale);
  double learning_rate_at(std::size_t step) const;
  std::size_t steps_taken() const { return step_; }

 private:
  SequenceLabeler* model_;
  double peak_lr_, weight_decay_, clip_;
  std::size_t total_steps_, warmup_steps_;
  std::size_t step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// Entity F1 (0–1) of deterministic predictions against gold.
double corpus_f1(const SequenceLabeler& model, const std::vector<Sentence>& sentences);

struct TrainReport {
  std::vector<double> loss_curve;  // mean per-sentence loss per epoch
  std::vector<double> val_curve;   // validation F1 after each epoch; index 0 is before training
  int best_epoch = 0;
  double best_val_f1 = 0.0;
};

/// Mini-batch supervised training on gold tags. The model ends holding the
/// parameters of the best validation epoch (epoch 0 = the starting point);
/// with no validation data it keeps the last epoch.
TrainReport train_supervised(SequenceLabeler& model, const std::vector<Sentence>& labeled,
                             const std::vector<Sentence>& validation, const TrainingConfig& config, int epochs,
                             std::uint64_t seed);

struct RoundStats {
  double mean_bald = 0.0;
  double mean_confidence = 0.0;
  std::size_t tokens_selected = 0;
  std::size_t tokens_total = 0;
  std::size_t skipped_sentences = 0;
  std::vector<double> loss_curve;
};

struct StudentRound {
  SequenceLabeler student;
  RoundStats stats;
  std::vector<SelectionReport> selections;
};

/// Pseudo labels and masks for one round, computed once with the frozen
/// teacher. SST mode uses a single deterministic pass and keeps every token.
std::vector<SelectionReport> annotate_unlabeled(const SequenceLabeler& teacher, const std::vector<Sentence>& unlabeled,
                                                const TrainingConfig& config, std::uint64_t seed);

/// Re-initialises the student from `base`, annotates `unlabeled` with the
/// teacher and trains the student on the masked robust objective.
StudentRound student_round(const SequenceLabeler& base, const SequenceLabeler& teacher,
                           const std::vector<Sentence>& unlabeled, const std::vector<Sentence>& labeled,
                           const TrainingConfig& config, std::uint64_t seed);

struct IterationRecord {
  int iteration = 0;
  double teacher_val_f1 = 0.0;
  double student_val_f1 = 0.0;
  double refined_val_f1 = 0.0;  // student after fine-tuning on the labeled set
  double mean_bald = 0.0;
  double mean_confidence = 0.0;
  std::size_t tokens_selected = 0;
  std::size_t tokens_total = 0;
  std::size_t skipped_sentences = 0;
  std::vector<double> student_loss;
  std::string checkpoint;  // relative to the run directory

  std::string to_json() const;
  bool operator==(const IterationRecord&) const = default;
};

struct SelfTrainResult {
  SequenceLabeler model;
  double best_val_f1 = 0.0;
  TrainReport initial;
  std::vector<IterationRecord> records;
};

/// The full loop: fine-tune the teacher on the labeled set, then per
/// iteration train a student from `base`, make it the teacher and fine-tune
/// again, until validation F1 stalls for `patience` iterations or
/// `max_iterations` is reached. Returns the best validation model seen.
/// With a run directory, each iteration's record and checkpoint are written
/// before the next iteration starts.
SelfTrainResult self_train(const SequenceLabeler& base, const CorpusSplit& split, const TrainingConfig& config,
                           const std::optional<std::filesystem::path>& run_dir = std::nullopt);

/// Fresh W_0 for a split: vocabulary over every split sentence.
SequenceLabeler initial_model(const CorpusSplit& split, const LabelScheme& scheme, const TrainingConfig& config);

}  // namespace sequst
