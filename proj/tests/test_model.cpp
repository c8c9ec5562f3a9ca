#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include "sequst/crf.hpp"
#include "sequst/losses.hpp"
#include "sequst/model.hpp"
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

TEST_CASE("vocabulary maps unseen tokens to the unknown row") {
  Vocabulary v;
  v.add("EU");
  v.add("EU");
  CHECK(v.size() == 2);
  CHECK(v.id("EU") == 1);
  CHECK(v.id("never-seen") == Vocabulary::kUnknown);
  CHECK(v.tokens()[0] == Vocabulary::kUnknownToken);
}

TEST_CASE("parameter shapes") {
  SequenceLabeler m = toy_model(2, 3, 4, HeadKind::kSoftmax, 1);
  const std::size_t Y = m.num_tags();
  CHECK(Y == 5);
  CHECK(m.param(SequenceLabeler::kEmbedding).rows() == m.vocab().size());
  CHECK(m.param(SequenceLabeler::kEmbedding).cols() == 4);
  CHECK(m.param(SequenceLabeler::kFwdWx).cols() == 12);
  CHECK(m.param(SequenceLabeler::kHeadW).rows() == 6);
  CHECK(m.param(SequenceLabeler::kHeadW).cols() == Y);
  CHECK(m.param(SequenceLabeler::kTransitions).rows() == Y);
  CHECK(&m.param("crf.transitions") == &m.param(SequenceLabeler::kTransitions));
}

TEST_CASE("distributions lie on the simplex for both heads") {
  std::mt19937_64 rng(2);
  for (HeadKind head : {HeadKind::kSoftmax, HeadKind::kCrf}) {
    const SequenceLabeler m = toy_model(2, 3, 4, head, 3);
    const Sentence s = toy_sentence(5, m.num_tags(), rng);
    const EncodedSentence enc = encode(m, s, false, 0);
    CHECK(enc.hidden.rows() == 5);
    CHECK(enc.hidden.cols() == 6);
    for (std::size_t j = 0; j < 5; ++j) {
      double total = 0.0;
      for (std::size_t c = 0; c < m.num_tags(); ++c) total += enc.distributions(j, c);
      CHECK(total == Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("deterministic decoding") {
  std::mt19937_64 rng(4);
  const SequenceLabeler soft = toy_model(2, 3, 4, HeadKind::kSoftmax, 5);
  const Sentence s = toy_sentence(6, soft.num_tags(), rng);
  const EncodedSentence enc = encode(soft, s, false, 0);
  const TagSequence tags = predict_tags(soft, s);
  for (std::size_t j = 0; j < 6; ++j) {
    for (std::size_t c = 0; c < soft.num_tags(); ++c) CHECK(enc.emissions(j, c) <= enc.emissions(j, tags[j]));
  }

  const SequenceLabeler crf = toy_model(2, 3, 4, HeadKind::kCrf, 5);
  const EncodedSentence e2 = encode(crf, s, false, 0);
  CHECK(predict_tags(crf, s) == crf_viterbi(e2.emissions, crf.param(SequenceLabeler::kTransitions)).path);
}

TEST_CASE("dropout passes are seeded") {
  std::mt19937_64 rng(6);
  const SequenceLabeler m = toy_model(2, 3, 4, HeadKind::kSoftmax, 7, 0.3);
  const Sentence s = toy_sentence(5, m.num_tags(), rng);
  const Tensor a = encode(m, s, true, 11).distributions;
  CHECK(bitwise_equal(encode(m, s, true, 11).distributions, a));
  CHECK_FALSE(bitwise_equal(encode(m, s, true, 12).distributions, a));
  CHECK(bitwise_equal(encode(m, s, false, 11).distributions, encode(m, s, false, 12).distributions));
}

TEST_CASE("tensor helpers agree with the tape") {
  std::mt19937_64 rng(8);
  const SequenceLabeler m = toy_model(2, 3, 4, HeadKind::kSoftmax, 9);
  const Sentence s = toy_sentence(3, m.num_tags(), rng);
  const EncodedSentence enc = encode(m, s, false, 0);
  const std::vector<double> h(enc.hidden.values().begin(), enc.hidden.values().begin() + 6);
  const auto p = softmax_head(m, h);
  for (std::size_t c = 0; c < m.num_tags(); ++c) CHECK(p[c] == Approx(enc.distributions(0, c)).epsilon(1e-12));
  const auto [mu, sigma] = gaussian_project(m, h);
  CHECK(mu.size() == 6);
  for (double v : sigma) CHECK(v > 0.0);
}

TEST_CASE("supervised loss gradients through the whole model") {
  std::mt19937_64 rng(10);
  for (HeadKind head : {HeadKind::kSoftmax, HeadKind::kCrf}) {
    SequenceLabeler m = toy_model(2, 3, 3, head, 11);
    const Sentence s = toy_sentence(4, m.num_tags(), rng);
    const auto ids = m.vocab().ids(s);
    const auto params = all_params(m);
    const double err = finite_diff_grad_check(
        [&](Tape& t) {
          const ModelVars vars = bind(t, m);
          return supervised_nll(vars, m, run_encoder(vars, m, ids, false, 0), *s.gold_tags);
        },
        params);
    CHECK(err < 1e-6);
  }
}

TEST_CASE("checkpoint round trip is bitwise") {
  std::mt19937_64 rng(12);
  for (HeadKind head : {HeadKind::kSoftmax, HeadKind::kCrf}) {
    const SequenceLabeler m = toy_model(3, 4, 5, head, 13, 0.2);
    const auto path = std::filesystem::temp_directory_path() / "sequst_test_ckpt.json";
    save_checkpoint(path, m);
    const SequenceLabeler back = load_checkpoint(path);
    std::filesystem::remove(path);
    CHECK(back.config().head == head);
    CHECK(back.config().dropout == 0.2);
    CHECK(back.vocab().tokens() == m.vocab().tokens());
    CHECK(back.scheme().tags() == m.scheme().tags());
    for (std::size_t i = 0; i < m.parameters().size(); ++i)
      CHECK(bitwise_equal(back.parameters()[i].value, m.parameters()[i].value));
    const Sentence s = toy_sentence(6, m.num_tags(), rng);
    CHECK(bitwise_equal(encode(back, s, true, 3).distributions, encode(m, s, true, 3).distributions));
    CHECK(checkpoint_text(back) == checkpoint_text(m));
  }
}

TEST_CASE("malformed checkpoints are rejected") {
  CHECK_THROWS(checkpoint_from_text("{}"));
  CHECK_THROWS(checkpoint_from_text("not json"));
  const SequenceLabeler m = toy_model(2, 2, 2, HeadKind::kSoftmax, 1);
  std::string text = checkpoint_text(m);
  const std::string key = "\"format_version\": 1";
  const auto pos = text.find(key);
  REQUIRE(pos != std::string::npos);
  text.replace(pos, key.size(), "\"format_version\": 9");
  CHECK_THROWS(checkpoint_from_text(text));
}
