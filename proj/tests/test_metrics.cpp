#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <vector>

#include "sequst/data.hpp"
#include "sequst/metrics.hpp"
#include "sequst/numerics.hpp"

using namespace sequst;
using doctest::Approx;

namespace {
constexpr int O = 0;
const int B_PER = LabelScheme::begin_of(0), I_PER = LabelScheme::inside_of(0);
const int B_LOC = LabelScheme::begin_of(1), I_LOC = LabelScheme::inside_of(1);
}  // namespace

TEST_CASE("decode well-formed spans") {
  const auto spans = decode_spans({B_PER, I_PER, O});
  REQUIRE(spans.size() == 1);
  CHECK(spans[0] == EntitySpan{0, 0, 2, 0});
  CHECK(decode_spans({O, O, O}).empty());
}

TEST_CASE("stray inside tag opens a span in lenient mode") {
  std::size_t repairs = 0;
  const auto spans = decode_spans({I_LOC, O, B_LOC}, 0, &repairs);
  REQUIRE(spans.size() == 2);
  CHECK(spans[0] == EntitySpan{0, 0, 1, 1});
  CHECK(spans[1] == EntitySpan{0, 2, 3, 1});
  CHECK(repairs == 1);
}

TEST_CASE("class change inside a run closes the span") {
  const auto spans = decode_spans({B_PER, I_LOC, I_LOC});
  REQUIRE(spans.size() == 2);
  CHECK(spans[0] == EntitySpan{0, 0, 1, 0});
  CHECK(spans[1] == EntitySpan{0, 1, 3, 1});
}

TEST_CASE("encode then decode is the identity on valid BIO") {
  const LabelScheme scheme({"A", "B", "C"});
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t L = 1 + uniform_index(rng, 8);
    TagSequence tags;
    for (std::size_t j = 0; j < L; ++j) {
      const int prev = tags.empty() ? 0 : tags.back();
      int t = static_cast<int>(uniform_index(rng, scheme.size()));
      if (LabelScheme::is_inside(t) && LabelScheme::class_of(prev) != LabelScheme::class_of(t)) t = t - 1;
      tags.push_back(t);
    }
    REQUIRE(scheme.valid_bio(tags));
    CHECK(encode_spans(decode_spans(tags), L) == tags);
  }
}

TEST_CASE("entity F1 reference cases") {
  const std::vector<EntitySpan> gold{{0, 0, 2, 0}};
  const MetricsReport same = entity_f1(gold, gold, 2);
  CHECK(same.precision == 1.0);
  CHECK(same.recall == 1.0);
  CHECK(same.f1 == 1.0);

  CHECK(entity_f1(gold, {}, 2).f1 == 0.0);

  const MetricsReport half = entity_f1(gold, {{0, 0, 2, 0}, {0, 3, 4, 1}}, 2);
  CHECK(half.precision == Approx(0.5));
  CHECK(half.recall == Approx(1.0));
  CHECK(half.f1 == Approx(0.6667).epsilon(1e-4));
  CHECK(half.per_class[0].f1 == 1.0);
  CHECK(half.per_class[1].f1 == 0.0);
}

TEST_CASE("boundary or class mismatch is a miss") {
  const std::vector<EntitySpan> gold{{0, 0, 2, 0}};
  CHECK(entity_f1(gold, {{0, 0, 1, 0}}, 1).f1 == 0.0);
  CHECK(entity_f1(gold, {{0, 0, 2, 1}}, 2).f1 == 0.0);
  CHECK(entity_f1(gold, {{1, 0, 2, 0}}, 1).f1 == 0.0);
}

TEST_CASE("swapping gold and prediction swaps P and R") {
  const std::vector<EntitySpan> a{{0, 0, 1, 0}, {0, 2, 4, 1}, {1, 0, 1, 0}};
  const std::vector<EntitySpan> b{{0, 0, 1, 0}, {1, 0, 2, 0}};
  const MetricsReport ab = entity_f1(a, b, 2), ba = entity_f1(b, a, 2);
  CHECK(ab.precision == ba.recall);
  CHECK(ab.recall == ba.precision);
  CHECK(ab.f1 == Approx(ba.f1).epsilon(1e-15));
}

TEST_CASE("f1 of zero precision and recall is zero") {
  CHECK(f1_score(0.0, 0.0) == 0.0);
  CHECK(f1_score(1.0, 0.5) == Approx(2.0 / 3.0));
}

TEST_CASE("evaluate_tags over sentences") {
  const std::vector<TagSequence> gold{{B_PER, I_PER, O}, {O, B_LOC}};
  const std::vector<TagSequence> pred{{B_PER, I_PER, O}, {O, O}};
  const MetricsReport r = evaluate_tags(gold, pred, 2);
  CHECK(r.gold_spans == 2);
  CHECK(r.predicted_spans == 1);
  CHECK(r.correct_spans == 1);
  CHECK(r.tokens == 5);
  CHECK(r.f1 == Approx(2.0 / 3.0));
}
