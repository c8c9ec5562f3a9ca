#pragma once

// Small fixtures shared by the unit tests and the acceptance binary.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <string>
#include <vector>

#include "sequst/data.hpp"
#include "sequst/model.hpp"
#include "sequst/numerics.hpp"
#include "sequst/tensor.hpp"

namespace sequst::testing {

inline Tensor random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  Tensor t = Tensor::matrix(rows, cols);
  for (double& v : t.values()) v = uniform(rng, lo, hi);
  return t;
}

/// Same shape and the same bytes in every entry.
inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(double)) == 0;
}

inline Sentence sentence(std::vector<std::string> tokens, std::vector<int> tags = {}) {
  Sentence s;
  s.tokens = std::move(tokens);
  if (!tags.empty()) s.gold_tags = std::move(tags);
  return s;
}

/// A model over a fixed token list with every parameter redrawn from
/// uniform(−scale, scale), so that tests see non-trivial weights everywhere.
inline SequenceLabeler toy_model(std::size_t classes, std::size_t hidden, std::size_t embed, HeadKind head,
                                 std::uint64_t seed, double dropout = 0.0, double scale = 0.5) {
  Vocabulary vocab;
  for (int i = 0; i < 8; ++i) vocab.add("t" + std::to_string(i));
  std::vector<std::string> names;
  for (std::size_t c = 0; c < classes; ++c) names.push_back("C" + std::to_string(c));
  ModelConfig config;
  config.embed_dim = embed;
  config.hidden_dim = hidden;
  config.dropout = dropout;
  config.head = head;
  SequenceLabeler model(config, std::move(vocab), LabelScheme(names), seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  for (auto& p : model.parameters()) {
    for (double& v : p.value.values()) v = uniform(rng, -scale, scale);
  }
  return model;
}

inline Sentence toy_sentence(std::size_t length, std::size_t num_tags, std::mt19937_64& rng) {
  Sentence s;
  s.gold_tags.emplace();
  for (std::size_t j = 0; j < length; ++j) {
    s.tokens.push_back("t" + std::to_string(uniform_index(rng, 8)));
    s.gold_tags->push_back(static_cast<int>(uniform_index(rng, num_tags)));
  }
  return s;
}

/// Exhaustive CRF reference over all |Y|^L paths, no start/stop scores.
struct BruteForceCrf {
  double log_partition = 0.0;
  double best_score = 0.0;
  std::vector<int> best_path;
  std::vector<std::vector<double>> marginals;
};

inline BruteForceCrf brute_force_crf(const Tensor& e, const Tensor& t) {
  const std::size_t L = e.rows(), Y = e.cols();
  std::size_t total = 1;
  for (std::size_t j = 0; j < L; ++j) total *= Y;
  std::vector<double> scores(total);
  std::vector<std::vector<int>> paths(total, std::vector<int>(L));
  BruteForceCrf out;
  out.best_score = -INFINITY;
  double max_score = -INFINITY;
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t rest = code;
    // Most significant digit first so enumeration order is lexicographic.
    for (std::size_t j = L; j-- > 0;) {
      paths[code][j] = static_cast<int>(rest % Y);
      rest /= Y;
    }
    double s = 0.0;
    for (std::size_t j = 0; j < L; ++j) {
      s += e(j, paths[code][j]);
      if (j > 0) s += t(paths[code][j - 1], paths[code][j]);
    }
    scores[code] = s;
    max_score = std::max(max_score, s);
    if (s > out.best_score) {
      out.best_score = s;
      out.best_path = paths[code];
    }
  }
  double z = 0.0;
  for (double s : scores) z += std::exp(s - max_score);
  out.log_partition = max_score + std::log(z);
  out.marginals.assign(L, std::vector<double>(Y, 0.0));
  for (std::size_t code = 0; code < total; ++code) {
    const double p = std::exp(scores[code] - out.log_partition);
    for (std::size_t j = 0; j < L; ++j) out.marginals[j][paths[code][j]] += p;
  }
  return out;
}

}  // namespace sequst::testing
