#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "sequst/losses.hpp"
#include "test_support.hpp"

using namespace sequst;
using namespace sequst::testing;
using doctest::Approx;

namespace {

std::vector<Tensor*> all_params(SequenceLabeler& model) {
  std::vector<Tensor*> out;
  for (auto& p : model.parameters()) out.push_back(&p.value);
  return out;
}

}  // namespace

TEST_CASE("phce reference values") {
  CHECK(phce(0.05, 10.0) == Approx(2.8025850929940457).epsilon(1e-13));
  CHECK(phce(0.5, 10.0) == Approx(0.69314718055994531).epsilon(1e-13));
  CHECK(phce(1.0, 10.0) == 0.0);
  // p is clamped away from zero.
  CHECK(phce(0.0, 10.0) == Approx(std::log(10.0) + 1.0).epsilon(1e-10));
}

TEST_CASE("phce is continuous with a bounded slope") {
  for (double tau : {2.0, 10.0, 50.0}) {
    const double knot = 1.0 / tau;
    CHECK(std::abs(phce(knot, tau) - phce(std::nextafter(knot, 1.0), tau)) < 1e-9);
    for (int i = 1; i <= 1000; ++i) {
      const double p = i / 1000.0;
      CHECK(std::abs(phce_derivative(p, tau)) <= tau);
      if (p > knot) CHECK(phce(p, tau) == Approx(-std::log(p)).epsilon(1e-12));
    }
  }
}

TEST_CASE("loss config validation names the field") {
  RobustLossConfig c;
  c.tau = 1.0;
  try {
    c.validate();
    FAIL("expected a throw");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("tau") != std::string::npos);
  }
  c = RobustLossConfig{};
  c.k_perturb = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = RobustLossConfig{};
  c.lambda = -1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("masked loss") {
  const Tensor dist({2, 2}, {0.5, 0.5, 0.0, 1.0});
  RobustLossConfig c;
  const std::vector<char> both{1, 1};
  CHECK(msl_loss(dist, {0, 1}, both, c) == Approx(0.34657359027997265).epsilon(1e-13));

  const std::vector<char> second{0, 1};
  CHECK(msl_loss(dist, {0, 1}, second, c) == 0.0);

  bool skipped = false;
  const std::vector<char> none{0, 0};
  CHECK(msl_loss(dist, {0, 1}, none, c, &skipped) == 0.0);
  CHECK(skipped);

  c.loss_kind = LossKind::kCrossEntropy;
  CHECK(msl_loss(dist, {0, 1}, both, c) == Approx(std::log(2.0) / 2).epsilon(1e-13));
}

TEST_CASE("gaussian perturbation") {
  const std::vector<double> h{1.0, -2.0}, mu{1.0, 0.5}, sigma{0.5, 2.0}, eps{2.0, -1.0};
  CHECK(gaussian_perturb(h, mu, sigma, eps) == std::vector<double>{2.0, 3.0});
  const std::vector<double> zero{0.0, 0.0}, one{1.0, 1.0};
  CHECK(gaussian_perturb(h, one, sigma, zero) == h);
}

TEST_CASE("consistency noise is seeded") {
  const auto a = consistency_noise(3, 4, 2, 5), b = consistency_noise(3, 4, 2, 5), c = consistency_noise(3, 4, 2, 6);
  REQUIRE(a.size() == 2);
  CHECK(a[0].rows() == 3);
  CHECK(a[1].cols() == 4);
  CHECK(bitwise_equal(a[0], b[0]));
  CHECK_FALSE(bitwise_equal(a[0], c[0]));
  CHECK_FALSE(bitwise_equal(a[0], a[1]));
}

TEST_CASE("gcr is non-negative and zero when lambda is zero in the objective") {
  std::mt19937_64 rng(1);
  SequenceLabeler m = toy_model(2, 3, 4, HeadKind::kSoftmax, 2);
  const Sentence s = toy_sentence(5, m.num_tags(), rng);
  const EncodedSentence enc = encode(m, s, false, 0);
  RobustLossConfig c;
  CHECK(gcr_loss(m, enc, c, 3) >= 0.0);

  PseudoLabeledSentence item{0, &s, *s.gold_tags, std::vector<char>(5, 1)};
  c.lambda = 0.0;
  const double without = combined_objective({&item, 1}, m, c, 4, false, false).total;
  CHECK(without == Approx(msl_loss(enc.distributions, item.pseudo, item.mask, c)).epsilon(1e-12));
}

TEST_CASE("masked loss gradients for both heads") {
  std::mt19937_64 rng(3);
  for (HeadKind head : {HeadKind::kSoftmax, HeadKind::kCrf}) {
    SequenceLabeler m = toy_model(2, 3, 3, head, 4);
    const Sentence s = toy_sentence(5, m.num_tags(), rng);
    const auto ids = m.vocab().ids(s);
    const std::vector<char> mask{1, 0, 1, 1, 0};
    RobustLossConfig c;
    c.tau = 2.5;
    const auto params = all_params(m);
    const double err = finite_diff_grad_check(
        [&](Tape& t) {
          const ModelVars vars = bind(t, m);
          return msl_term(vars, m, run_encoder(vars, m, ids, false, 0), *s.gold_tags, mask, c).loss;
        },
        params);
    CHECK(err < 1e-6);
  }
}

TEST_CASE("consistency and combined gradients") {
  std::mt19937_64 rng(5);
  SequenceLabeler m = toy_model(2, 3, 3, HeadKind::kSoftmax, 6, 0.2);
  const Sentence s = toy_sentence(4, m.num_tags(), rng);
  const auto ids = m.vocab().ids(s);
  RobustLossConfig c;
  c.stop_clean_gradient = false;
  const auto params = all_params(m);
  const double gcr_err = finite_diff_grad_check(
      [&](Tape& t) {
        const ModelVars vars = bind(t, m);
        return gcr_term(vars, run_encoder(vars, m, ids, false, 0).hidden, c, std::uint64_t{7});
      },
      params);
  CHECK(gcr_err < 1e-6);

  PseudoLabeledSentence item{2, &s, *s.gold_tags, {1, 1, 0, 1}};
  const double obj_err = finite_diff_grad_check(
      [&](Tape& t) { return sentence_objective(bind(t, m), m, item, c, 9, true); }, params);
  CHECK(obj_err < 1e-6);

  // Holding the clean branch constant drops part of the true gradient.
  c.stop_clean_gradient = true;
  const double stopped_err = finite_diff_grad_check(
      [&](Tape& t) { return sentence_objective(bind(t, m), m, item, c, 9, true); }, params);
  CHECK(stopped_err > 1e-4);
}

TEST_CASE("combined objective does not depend on batch order") {
  std::mt19937_64 rng(7);
  SequenceLabeler m = toy_model(2, 3, 4, HeadKind::kSoftmax, 8, 0.2);
  const Sentence a = toy_sentence(4, m.num_tags(), rng), b = toy_sentence(3, m.num_tags(), rng);
  std::vector<PseudoLabeledSentence> batch{{0, &a, *a.gold_tags, {1, 1, 1, 1}}, {1, &b, *b.gold_tags, {1, 0, 1}}};
  const RobustLossConfig c;
  const double forward = combined_objective(batch, m, c, 3, true, false).total;
  std::swap(batch[0], batch[1]);
  CHECK(combined_objective(batch, m, c, 3, true, false).total == Approx(forward).epsilon(1e-14));
}

TEST_CASE("supervised nll of a uniform model") {
  SequenceLabeler m = toy_model(1, 2, 2, HeadKind::kCrf, 1, 0.0, 0.0);
  const Sentence s = sentence({"t0", "t1", "t2"}, {0, 1, 0});
  Tape t(false);
  const ModelVars vars = bind_readonly(t, m);
  const double nll = supervised_nll(vars, m, run_encoder(vars, m, m.vocab().ids(s), false, 0), *s.gold_tags).item();
  CHECK(nll == Approx(std::log(3.0)).epsilon(1e-12));
}
