#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sequst/autograd.hpp"
#include "sequst/data.hpp"
#include "sequst/model.hpp"

namespace sequst {

enum class LossKind { kPhce, kCrossEntropy };
std::string to_string(LossKind kind);
LossKind parse_loss_kind(std::string_view name);

struct RobustLossConfig {
  double tau = 10.0;
  double lambda = 0.5;
  int k_perturb = 3;
  LossKind loss_kind = LossKind::kPhce;
  /// Treat the clean branch of the consistency term as a constant target.
  bool stop_clean_gradient = true;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

/// Partially huberised cross-entropy: −τp + ln τ + 1 for p ≤ 1/τ, −ln p above.
/// p is clamped to [1e-12, 1] first.
double phce(double p, double tau);
/// d phce / dp.
double phce_derivative(double p, double tau);

/// Per-token loss φ applied elementwise to log-probabilities.
Var token_loss_from_log_prob(Var log_probs, const RobustLossConfig& config);

/// Masked sequence-labelling loss over precomputed distributions:
/// (1/L′) Σ_{M_j=1} φ(p_j(ỹ_j)). `skipped` is set when no token is selected.
double msl_loss(const Tensor& distributions, const TagSequence& pseudo, std::span<const char> mask,
                const RobustLossConfig& config, bool* skipped = nullptr);

struct MslTerm {
  Var loss;
  bool skipped = false;
};

/// Differentiable form on an encoder output. Under the CRF head p_j is the
/// token marginal, obtained as a masked log partition minus log Z.
MslTerm msl_term(const ModelVars& vars, const SequenceLabeler& model, const EncoderOutput& encoded,
                 const TagSequence& pseudo, std::span<const char> mask, const RobustLossConfig& config);

/// h ⊙ (μ + σ ⊙ ε).
std::vector<double> gaussian_perturb(std::span<const double> hidden, std::span<const double> mu,
                                     std::span<const double> sigma, std::span<const double> epsilon);

/// Standard-normal draws ε^(k) for one sentence, L×width each.
std::vector<Tensor> consistency_noise(std::size_t length, std::size_t width, int k_perturb, std::uint64_t seed);

/// Mean over L·K of KL(p(y|h_j) ‖ p(y|ĥ_j^(k))) with the emission softmax as
/// the token distribution.
Var gcr_term(const ModelVars& vars, Var hidden, const RobustLossConfig& config, std::span<const Tensor> noise);
Var gcr_term(const ModelVars& vars, Var hidden, const RobustLossConfig& config, std::uint64_t seed);

/// Value of the consistency term for an already encoded sentence.
double gcr_loss(const SequenceLabeler& model, const EncodedSentence& encoded, const RobustLossConfig& config,
                std::uint64_t seed);

/// One pseudo-labelled unlabeled sentence. `id` keys its noise and dropout
/// seeds, so results do not depend on batch order.
struct PseudoLabeledSentence {
  std::size_t id = 0;
  const Sentence* sentence = nullptr;
  TagSequence pseudo;
  std::vector<char> mask;
};

struct ObjectiveValue {
  double total = 0.0;
  std::size_t skipped = 0;
};

/// Σ over the batch of msl + λ·gcr. With `accumulate_gradients` each sentence's
/// backward pass adds into the model's parameter gradients.
ObjectiveValue combined_objective(std::span<const PseudoLabeledSentence> batch, SequenceLabeler& model,
                                  const RobustLossConfig& config, std::uint64_t seed, bool dropout_active,
                                  bool accumulate_gradients);

/// One sentence's msl + λ·gcr on the tape `vars` is bound to.
Var sentence_objective(const ModelVars& vars, const SequenceLabeler& model,
                       const PseudoLabeledSentence& item, const RobustLossConfig& config, std::uint64_t seed,
                       bool dropout_active, bool* skipped = nullptr);

/// Supervised negative log-likelihood per token: mean cross-entropy (softmax)
/// or (log Z − gold path score) / L (CRF).
Var supervised_nll(const ModelVars& vars, const SequenceLabeler& model, const EncoderOutput& encoded,
                   const TagSequence& gold);

}  // namespace sequst
