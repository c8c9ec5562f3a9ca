#include "sequst/losses.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "sequst/crf.hpp"
#include "sequst/numerics.hpp"

namespace sequst {

std::string to_string(LossKind kind) { return kind == LossKind::kPhce ? "phce" : "cross_entropy"; }

LossKind parse_loss_kind(std::string_view name) {
  if (name == "phce") return LossKind::kPhce;
  if (name == "cross_entropy" || name == "ce") return LossKind::kCrossEntropy;
  throw std::invalid_argument(fmt::format("loss_kind: expected phce or cross_entropy, got '{}'", name));
}

void RobustLossConfig::validate() const {
  if (!(tau > 1.0)) throw std::invalid_argument(fmt::format("tau = {} violates tau > 1", tau));
  if (!(lambda >= 0.0)) throw std::invalid_argument(fmt::format("lambda = {} violates lambda >= 0", lambda));
  if (k_perturb < 1) throw std::invalid_argument(fmt::format("k_perturb = {} violates k_perturb >= 1", k_perturb));
}

double phce(double p, double tau) {
  if (!(tau > 1.0)) throw std::invalid_argument(fmt::format("phce: tau = {} violates tau > 1", tau));
  p = clamp_probability(p);
  if (p <= 1.0 / tau) return -tau * p + std::log(tau) + 1.0;
  return -std::log(p);
}

double phce_derivative(double p, double tau) {
  if (!(tau > 1.0)) throw std::invalid_argument(fmt::format("phce: tau = {} violates tau > 1", tau));
  p = clamp_probability(p);
  if (p <= 1.0 / tau) return -tau;
  return -1.0 / p;
}

Var token_loss_from_log_prob(Var log_probs, const RobustLossConfig& config) {
  const double floor = std::log(kProbabilityFloor);
  if (config.loss_kind == LossKind::kCrossEntropy) {
    return ag::map(
        log_probs, [floor](double lp) { return -std::max(lp, floor); },
        [floor](double lp) { return lp > floor ? -1.0 : 0.0; });
  }
  const double tau = config.tau;
  const double log_tau = std::log(tau);
  // Expressed in log space: d/d(ln p) = p · dφ/dp.
  return ag::map(
      log_probs,
      [tau, log_tau, floor](double lp) {
        lp = std::min(std::max(lp, floor), 0.0);
        const double p = std::exp(lp);
        return p <= 1.0 / tau ? -tau * p + log_tau + 1.0 : -lp;
      },
      [tau, floor](double lp) {
        if (lp < floor || lp > 0.0) return 0.0;
        const double p = std::exp(lp);
        return p <= 1.0 / tau ? -tau * p : -1.0;
      });
}

double msl_loss(const Tensor& distributions, const TagSequence& pseudo, std::span<const char> mask,
                const RobustLossConfig& config, bool* skipped) {
  const std::size_t L = distributions.rows();
  if (pseudo.size() != L || mask.size() != L) throw std::invalid_argument("msl_loss: shape mismatch");
  double total = 0.0;
  std::size_t selected = 0;
  for (std::size_t j = 0; j < L; ++j) {
    if (mask[j] != 0 && mask[j] != 1) throw std::invalid_argument("msl_loss: mask must be binary");
    if (!mask[j]) continue;
    const double p = clamp_probability(distributions(j, pseudo[j]));
    total += config.loss_kind == LossKind::kPhce ? phce(p, config.tau) : -std::log(p);
    ++selected;
  }
  if (skipped) *skipped = selected == 0;
  return selected == 0 ? 0.0 : total / static_cast<double>(selected);
}

MslTerm msl_term(const ModelVars& vars, const SequenceLabeler& model, const EncoderOutput& encoded,
                 const TagSequence& pseudo, std::span<const char> mask, const RobustLossConfig& config) {
  Tape& tape = *encoded.emissions.tape();
  const std::size_t L = encoded.emissions.value().rows();
  const std::size_t Y = encoded.emissions.value().cols();
  if (pseudo.size() != L || mask.size() != L) throw std::invalid_argument("msl_term: shape mismatch");
  std::vector<std::size_t> rows, cols;
  for (std::size_t j = 0; j < L; ++j) {
    if (mask[j]) {
      rows.push_back(j);
      cols.push_back(static_cast<std::size_t>(pseudo[j]));
    }
  }
  if (rows.empty()) return {tape.constant(Tensor::scalar(0.0)), true};

  Var token_losses;
  if (model.config().head == HeadKind::kCrf) {
    Var transitions = vars[SequenceLabeler::kTransitions];
    Var log_z = ag::crf_log_partition(encoded.emissions, transitions);
    Var total;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::vector<char> pin(L * Y, 1);
      for (std::size_t c = 0; c < Y; ++c) pin[rows[i] * Y + c] = c == cols[i] ? 1 : 0;
      Var log_p = ag::sub(ag::crf_log_partition(encoded.emissions, transitions, std::move(pin)), log_z);
      Var l = token_loss_from_log_prob(log_p, config);
      total = i == 0 ? l : ag::add(total, l);
    }
    token_losses = total;
  } else {
    Var log_probs = ag::log_softmax_rows(encoded.emissions);
    token_losses = ag::sum(token_loss_from_log_prob(ag::pick(log_probs, rows, cols), config));
  }
  return {ag::scale(token_losses, 1.0 / static_cast<double>(rows.size())), false};
}

std::vector<double> gaussian_perturb(std::span<const double> hidden, std::span<const double> mu,
                                     std::span<const double> sigma, std::span<const double> epsilon) {
  const std::size_t n = hidden.size();
  if (mu.size() != n || sigma.size() != n || epsilon.size() != n) {
    throw std::invalid_argument("gaussian_perturb: length mismatch");
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = hidden[i] * (mu[i] + sigma[i] * epsilon[i]);
  return out;
}

std::vector<Tensor> consistency_noise(std::size_t length, std::size_t width, int k_perturb, std::uint64_t seed) {
  std::vector<Tensor> noise;
  noise.reserve(static_cast<std::size_t>(k_perturb));
  for (int k = 0; k < k_perturb; ++k) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(Stream::kNoise), static_cast<std::uint64_t>(k)));
    Tensor eps = Tensor::matrix(length, width);
    for (double& v : eps.values()) v = standard_normal(rng);
    noise.push_back(std::move(eps));
  }
  return noise;
}

Var gcr_term(const ModelVars& vars, Var hidden, const RobustLossConfig& config, std::span<const Tensor> noise) {
  Tape& tape = *hidden.tape();
  const std::size_t L = hidden.value().rows();
  if (L == 0 || noise.empty()) return tape.constant(Tensor::scalar(0.0));

  Var clean_log_p = ag::log_softmax_rows(head_emissions(vars, hidden));
  Tensor clean_p = clean_log_p.value();
  clean_p.drop_grad();
  for (double& v : clean_p.values()) v = std::exp(v);

  Var mu = gaussian_mean(vars, hidden);
  Var sigma = gaussian_scale(vars, hidden);
  Var total;
  for (std::size_t k = 0; k < noise.size(); ++k) {
    Var perturbed = ag::mul(hidden, ag::add(mu, ag::mul_const(sigma, noise[k])));
    Var log_q = ag::log_softmax_rows(head_emissions(vars, perturbed));
    Var kl;
    if (config.stop_clean_gradient) {
      kl = ag::kl_from_target(clean_p, log_q);
    } else {
      kl = ag::sum(ag::mul(ag::exp(clean_log_p), ag::sub(clean_log_p, log_q)));
    }
    total = k == 0 ? kl : ag::add(total, kl);
  }
  return ag::scale(total, 1.0 / static_cast<double>(L * noise.size()));
}

Var gcr_term(const ModelVars& vars, Var hidden, const RobustLossConfig& config, std::uint64_t seed) {
  const auto noise = consistency_noise(hidden.value().rows(), hidden.value().cols(), config.k_perturb, seed);
  return gcr_term(vars, hidden, config, noise);
}

double gcr_loss(const SequenceLabeler& model, const EncodedSentence& encoded, const RobustLossConfig& config,
                std::uint64_t seed) {
  config.validate();
  Tape tape(false);
  const ModelVars vars = bind_readonly(tape, model);
  Var h = tape.reference(encoded.hidden);
  return gcr_term(vars, h, config, seed).item();
}

Var sentence_objective(const ModelVars& vars, const SequenceLabeler& model,
                       const PseudoLabeledSentence& item, const RobustLossConfig& config, std::uint64_t seed,
                       bool dropout_active, bool* skipped) {
  const auto ids = model.vocab().ids(*item.sentence);
  const std::uint64_t dropout_seed = mix_seed(seed, static_cast<std::uint64_t>(Stream::kDropout), item.id);
  const EncoderOutput enc = run_encoder(vars, model, ids, dropout_active, dropout_seed);
  MslTerm msl = msl_term(vars, model, enc, item.pseudo, item.mask, config);
  if (skipped) *skipped = msl.skipped;
  if (config.lambda == 0.0) return msl.loss;
  const std::uint64_t noise_seed = mix_seed(seed, static_cast<std::uint64_t>(Stream::kNoise), item.id);
  Var reg = gcr_term(vars, enc.hidden, config, noise_seed);
  return ag::add(msl.loss, ag::scale(reg, config.lambda));
}

ObjectiveValue combined_objective(std::span<const PseudoLabeledSentence> batch, SequenceLabeler& model,
                                  const RobustLossConfig& config, std::uint64_t seed, bool dropout_active,
                                  bool accumulate_gradients) {
  config.validate();
  ObjectiveValue out;
  for (const auto& item : batch) {
    Tape tape(accumulate_gradients);
    const ModelVars vars = accumulate_gradients ? bind(tape, model) : bind_readonly(tape, model);
    bool skipped = false;
    Var loss = sentence_objective(vars, model, item, config, seed, dropout_active, &skipped);
    const double v = loss.item();
    if (!std::isfinite(v)) {
      throw NumericError(fmt::format("combined objective: non-finite loss on sentence {}", item.id));
    }
    if (skipped) ++out.skipped;
    out.total += v;
    if (accumulate_gradients) tape.backward(loss);
  }
  return out;
}

Var supervised_nll(const ModelVars& vars, const SequenceLabeler& model, const EncoderOutput& encoded,
                   const TagSequence& gold) {
  const std::size_t L = encoded.emissions.value().rows();
  const std::size_t Y = encoded.emissions.value().cols();
  if (gold.size() != L || L == 0) throw std::invalid_argument("supervised_nll: length mismatch");
  const double inv_len = 1.0 / static_cast<double>(L);
  if (model.config().head == HeadKind::kCrf) {
    Var transitions = vars[SequenceLabeler::kTransitions];
    std::vector<char> path(L * Y, 0);
    for (std::size_t j = 0; j < L; ++j) path[j * Y + static_cast<std::size_t>(gold[j])] = 1;
    Var log_z = ag::crf_log_partition(encoded.emissions, transitions);
    Var gold_score = ag::crf_log_partition(encoded.emissions, transitions, std::move(path));
    return ag::scale(ag::sub(log_z, gold_score), inv_len);
  }
  std::vector<std::size_t> rows(L), cols(L);
  for (std::size_t j = 0; j < L; ++j) {
    rows[j] = j;
    cols[j] = static_cast<std::size_t>(gold[j]);
  }
  Var picked = ag::pick(ag::log_softmax_rows(encoded.emissions), rows, cols);
  return ag::scale(ag::sum(picked), -inv_len);
}

}  // namespace sequst
