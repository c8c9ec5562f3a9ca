#include "sequst/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <fmt/format.h>

namespace sequst {

double clamp_probability(double p) { return std::clamp(p, kProbabilityFloor, 1.0); }

void require_simplex(std::span<const double> p, const char* what) {
  if (p.empty()) throw NumericError(fmt::format("{}: empty probability vector", what));
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw NumericError(fmt::format("{}: entry {} is not a probability", what, v));
    }
    total += v;
  }
  if (std::abs(total - 1.0) > kSimplexTolerance) {
    throw NumericError(fmt::format("{}: entries sum to {}, not 1", what, total));
  }
}

double entropy(std::span<const double> p) {
  require_simplex(p, "entropy");
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return std::max(h, 0.0);
}

double log_sum_exp(std::span<const double> x) {
  if (x.empty()) throw NumericError("log_sum_exp: empty input");
  const double mx = *std::max_element(x.begin(), x.end());
  if (mx == -std::numeric_limits<double>::infinity()) return mx;
  if (!std::isfinite(mx)) throw NumericError("log_sum_exp: non-finite entry");
  if (x.size() == 1) return x[0];
  double s = 0.0;
  for (double v : x) s += std::exp(v - mx);
  return mx + std::log(s);
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw NumericError("kl_divergence: length mismatch");
  require_simplex(p, "kl_divergence(p)");
  require_simplex(q, "kl_divergence(q)");
  double d = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    if (p[c] == 0.0) continue;
    if (q[c] == 0.0) {
      throw NumericError(fmt::format("kl_divergence: q[{}] = 0 where p[{}] = {}", c, c, p[c]));
    }
    d += p[c] * std::log(p[c] / q[c]);
  }
  return d;
}

std::vector<double> softmax(std::span<const double> logits) {
  const double lse = log_sum_exp(logits);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = std::exp(logits[i] - lse);
  return out;
}

double finite_diff_grad_check(const LossBuilder& build, std::span<Tensor* const> params, double epsilon) {
  for (Tensor* p : params) p->zero_grad();
  {
    Tape tape(true);
    Var loss = build(tape);
    if (!std::isfinite(loss.item())) throw NumericError("grad check: non-finite loss at base point");
    tape.backward(loss);
  }
  auto evaluate = [&]() {
    Tape tape(false);
    const double v = build(tape).item();
    if (!std::isfinite(v)) throw NumericError("grad check: non-finite loss at probe point");
    return v;
  };

  double worst = 0.0;
  for (Tensor* p : params) {
    const std::vector<double> analytic(p->grad().begin(), p->grad().end());
    auto vals = p->values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double saved = vals[i];
      vals[i] = saved + epsilon;
      const double up = evaluate();
      vals[i] = saved - epsilon;
      const double down = evaluate();
      vals[i] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

double finite_diff_grad_check(const std::function<Var(Tape&, Var)>& f, Tensor& params, double epsilon) {
  Tensor* list[] = {&params};
  return finite_diff_grad_check([&](Tape& t) { return f(t, t.parameter(params)); }, list, epsilon);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer applied over the three words.
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ a) ^ (b * 0xd1b54a32d192ed03ULL));
}

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

double standard_normal(std::mt19937_64& rng) {
  // Box-Muller; one draw per call keeps stream consumption predictable.
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: empty range");
  // Rejection sampling to avoid modulo bias.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return static_cast<std::size_t>(r % n);
}

}  // namespace sequst
