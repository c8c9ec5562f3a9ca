#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <vector>

#include "sequst/numerics.hpp"

using namespace sequst;
using doctest::Approx;

TEST_CASE("entropy of reference distributions") {
  CHECK(entropy(std::vector<double>{0.5, 0.5}) == Approx(0.693147).epsilon(1e-6));
  CHECK(entropy(std::vector<double>{1.0, 0.0}) == 0.0);
  CHECK(entropy(std::vector<double>{0.25, 0.25, 0.25, 0.25}) == Approx(1.386294).epsilon(1e-6));
  CHECK(entropy(std::vector<double>{0.2, 0.3, 0.5}) == Approx(1.0296530140645735).epsilon(1e-12));
}

TEST_CASE("entropy rejects vectors off the simplex") {
  CHECK_THROWS_AS(entropy(std::vector<double>{0.5, 0.6}), NumericError);
  CHECK_THROWS_AS(entropy(std::vector<double>{1.2, -0.2}), NumericError);
  CHECK_THROWS_AS(entropy(std::vector<double>{}), NumericError);
}

TEST_CASE("log_sum_exp") {
  CHECK(log_sum_exp(std::vector<double>{0.0, 0.0}) == Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(log_sum_exp(std::vector<double>{7.3}) == 7.3);
  CHECK(log_sum_exp(std::vector<double>{1000.0, 1000.0}) == Approx(1000.0 + std::log(2.0)).epsilon(1e-14));
  CHECK(log_sum_exp(std::vector<double>{1.0, 2.0, 3.0}) == Approx(3.4076059644443803).epsilon(1e-13));

  const double inf = std::numeric_limits<double>::infinity();
  CHECK(log_sum_exp(std::vector<double>{-inf, 2.0}) == 2.0);
  CHECK(log_sum_exp(std::vector<double>{-inf, -inf}) == -inf);
}

TEST_CASE("kl_divergence") {
  CHECK(kl_divergence(std::vector<double>{0.5, 0.5}, std::vector<double>{0.5, 0.5}) == 0.0);
  CHECK(kl_divergence(std::vector<double>{1.0, 0.0}, std::vector<double>{0.5, 0.5}) ==
        Approx(0.693147).epsilon(1e-6));
  CHECK(kl_divergence(std::vector<double>{0.75, 0.25}, std::vector<double>{0.5, 0.5}) ==
        Approx(0.13081203594113696).epsilon(1e-12));
  CHECK_THROWS_AS(kl_divergence(std::vector<double>{0.5, 0.5}, std::vector<double>{1.0, 0.0}), NumericError);
}

TEST_CASE("softmax is shift invariant and sums to one") {
  const std::vector<double> a = softmax(std::vector<double>{std::log(3.0), 0.0});
  CHECK(a[0] == Approx(0.75));
  CHECK(a[1] == Approx(0.25));
  const std::vector<double> b = softmax(std::vector<double>{std::log(3.0) + 50.0, 50.0});
  CHECK(b[0] == Approx(0.75).epsilon(1e-12));
}

TEST_CASE("finite_diff_grad_check on a quadratic") {
  Tensor w = Tensor::scalar(3.0);
  const double err = finite_diff_grad_check([](Tape&, Var x) { return ag::mul(x, x); }, w);
  CHECK(err <= 1e-6);
}

TEST_CASE("finite_diff_grad_check detects a wrong gradient") {
  Tensor w = Tensor::scalar(2.0);
  // Value x², but the declared derivative is 3x.
  auto wrong = [](Tape&, Var x) {
    return ag::map(x, [](double v) { return v * v; }, [](double v) { return 3.0 * v; });
  };
  CHECK(finite_diff_grad_check(wrong, w) > 0.1);
}

TEST_CASE("finite_diff_grad_check throws on non-finite loss") {
  Tensor w = Tensor::scalar(0.0);
  auto bad = [](Tape&, Var x) {
    return ag::map(x, [](double) { return std::numeric_limits<double>::quiet_NaN(); }, [](double) { return 0.0; });
  };
  CHECK_THROWS_AS(finite_diff_grad_check(bad, w), NumericError);
}

TEST_CASE("random streams are reproducible and independent") {
  const RandomStreams a(42), b(42), c(43);
  CHECK(a.derive(Stream::kDropout, 3) == b.derive(Stream::kDropout, 3));
  CHECK(a.derive(Stream::kDropout, 3) != a.derive(Stream::kNoise, 3));
  CHECK(a.derive(Stream::kDropout, 3) != a.derive(Stream::kDropout, 4));
  CHECK(a.derive(Stream::kDropout) != c.derive(Stream::kDropout));

  auto ra = a.engine(Stream::kData), rb = b.engine(Stream::kData);
  for (int i = 0; i < 100; ++i) CHECK(uniform01(ra) == uniform01(rb));
}

TEST_CASE("uniform_index covers the range without bias at small n") {
  std::mt19937_64 rng(5);
  std::vector<int> counts(3, 0);
  for (int i = 0; i < 30000; ++i) ++counts[uniform_index(rng, 3)];
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("standard_normal has unit variance") {
  std::mt19937_64 rng(11);
  double sum = 0.0, sq = 0.0;
  const int n = 40000;
  for (int i = 0; i < n; ++i) {
    const double z = standard_normal(rng);
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.03);
  CHECK(std::abs(sq / n - 1.0) < 0.03);
}

TEST_CASE("shuffle is a permutation") {
  std::mt19937_64 rng(9);
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
  shuffle(v, rng);
  CHECK(std::set<int>(v.begin(), v.end()).size() == 8);
}
