#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sequst/autograd.hpp"
#include "sequst/tensor.hpp"

namespace sequst {

/// Raised when a value violates a numeric precondition (off-simplex vectors,
/// non-finite losses, support violations).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kProbabilityFloor = 1e-12;
inline constexpr double kSimplexTolerance = 1e-6;

double clamp_probability(double p);

/// Shannon entropy in nats; 0·ln 0 is taken as 0.
double entropy(std::span<const double> p);

/// max(x) + ln Σ exp(x − max(x)). Entries of −∞ are allowed as long as one
/// entry is finite; an all −∞ input returns −∞.
double log_sum_exp(std::span<const double> x);

/// Σ p ln(p/q). Throws NumericError when q_c = 0 while p_c > 0.
double kl_divergence(std::span<const double> p, std::span<const double> q);

std::vector<double> softmax(std::span<const double> logits);

void require_simplex(std::span<const double> p, const char* what);

/// Builds a scalar loss on the given tape. Parameters must enter the tape via
/// `Tape::parameter`.
using LossBuilder = std::function<Var(Tape&)>;

/// Compares reverse-mode gradients of `build` against central differences for
/// every entry of every tensor in `params`. Returns
/// max |analytic − numeric| / max(1, |numeric|).
double finite_diff_grad_check(const LossBuilder& build, std::span<Tensor* const> params,
                              double epsilon = 1e-5);

/// Single-tensor form: `f` maps a parameter var to a scalar loss var.
double finite_diff_grad_check(const std::function<Var(Tape&, Var)>& f, Tensor& params,
                              double epsilon = 1e-5);

/// Named random substreams of one run. Each stream is seeded from
/// (run seed, stream, index) so components can be replayed in isolation.
enum class Stream : std::uint64_t {
  kInit = 1,
  kDropout = 2,
  kNoise = 3,
  kData = 4,
  kSelection = 5,
  kSynth = 6,
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

class RandomStreams {
 public:
  explicit RandomStreams(std::uint64_t seed) : seed_(seed) {}
  std::uint64_t seed() const { return seed_; }
  std::uint64_t derive(Stream stream, std::uint64_t index = 0) const {
    return mix_seed(seed_, static_cast<std::uint64_t>(stream), index);
  }
  std::mt19937_64 engine(Stream stream, std::uint64_t index = 0) const {
    return std::mt19937_64(derive(stream, index));
  }

 private:
  std::uint64_t seed_;
};

/// Platform-independent draws (the std distributions are not specified
/// bit-for-bit across standard libraries).
double uniform01(std::mt19937_64& rng);
double uniform(std::mt19937_64& rng, double lo, double hi);
double standard_normal(std::mt19937_64& rng);
std::size_t uniform_index(std::mt19937_64& rng, std::size_t n);

template <typename T>
void shuffle(std::vector<T>& items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[uniform_index(rng, i)]);
  }
}

}  // namespace sequst
