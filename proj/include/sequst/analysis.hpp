#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "sequst/config.hpp"
#include "sequst/data.hpp"
#include "sequst/metrics.hpp"
#include "sequst/model.hpp"
#include "sequst/uncertainty.hpp"

namespace sequst {

struct SelectionErrorRate {
  ScoreStrategy strategy = ScoreStrategy::kNone;
  std::size_t selected = 0;
  std::size_t errors = 0;
  double rate = 0.0;  // errors / selected, 0 when nothing is selected
};

/// Fraction of selected tokens whose pseudo label differs from gold.
SelectionErrorRate selection_error_rate(const std::vector<SelectionReport>& selections,
                                        const std::vector<TagSequence>& gold);

/// Error rate of each strategy {none, confidence, certainty, both}, all scored
/// on the same MC predictions and selection seeds.
std::vector<SelectionErrorRate> selection_error_rates(const std::vector<McPredictions>& predictions,
                                                      const std::vector<TagSequence>& gold, double rho,
                                                      std::uint64_t seed, SelectionMode mode);

/// MC predictions of `model` over `sentences`, one seed per sentence.
std::vector<McPredictions> mc_predict_all(const SequenceLabeler& model, const std::vector<Sentence>& sentences,
                                          std::size_t t_passes, std::uint64_t seed);

/// JSON lines {sentence, position, token, tag, vector} of deterministic
/// encoder states. `tag` is the gold tag when present, else the prediction.
void export_embeddings(std::ostream& out, const SequenceLabeler& model, const std::vector<Sentence>& sentences);

}  // namespace sequst
