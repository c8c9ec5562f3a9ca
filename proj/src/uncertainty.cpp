#include "sequst/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "sequst/numerics.hpp"

namespace sequst {

McPredictions::McPredictions(Tensor probs, std::vector<std::uint64_t> seeds)
    : probs_(std::move(probs)), seeds_(std::move(seeds)) {
  if (probs_.rank() != 3 || probs_.shape()[0] == 0) {
    throw std::invalid_argument("McPredictions: expected a non-empty T×L×|Y| tensor");
  }
  if (!seeds_.empty() && seeds_.size() != probs_.shape()[0]) {
    throw std::invalid_argument("McPredictions: one seed per pass required");
  }
  for (std::size_t t = 0; t < passes(); ++t)
    for (std::size_t j = 0; j < length(); ++j) require_simplex(row(t, j), "McPredictions row");
}

std::span<const double> McPredictions::row(std::size_t pass, std::size_t token) const {
  const std::size_t C = classes();
  return probs_.values().subspan((pass * length() + token) * C, C);
}

std::vector<double> McPredictions::mean(std::size_t token) const {
  const auto first = row(0, token);
  std::vector<double> delta(classes(), 0.0);
  const double T = static_cast<double>(passes());
  for (std::size_t t = 1; t < passes(); ++t) {
    const auto r = row(t, token);
    for (std::size_t c = 0; c < r.size(); ++c) delta[c] += (r[c] - first[c]) / T;
  }
  std::vector<double> m(first.begin(), first.end());
  for (std::size_t c = 0; c < m.size(); ++c) m[c] += delta[c];
  return m;
}

McPredictions mc_predict(const SequenceLabeler& model, const Sentence& sentence, std::size_t t_passes,
                         std::uint64_t seed) {
  if (t_passes == 0) throw std::invalid_argument("mc_predict: t_passes must be at least 1");
  const std::size_t L = sentence.length(), Y = model.num_tags();
  Tensor probs({t_passes, L, Y});
  std::vector<std::uint64_t> seeds(t_passes);
  for (std::size_t t = 0; t < t_passes; ++t) {
    seeds[t] = mix_seed(seed, static_cast<std::uint64_t>(Stream::kDropout), t);
    const EncodedSentence enc = encode(model, sentence, true, seeds[t]);
    std::copy(enc.distributions.values().begin(), enc.distributions.values().end(),
              probs.values().begin() + static_cast<std::ptrdiff_t>(t * L * Y));
  }
  return McPredictions(std::move(probs), std::move(seeds));
}

TagSequence pseudo_annotate(const McPredictions& mc) {
  TagSequence out(mc.length());
  for (std::size_t j = 0; j < mc.length(); ++j) {
    const auto m = mc.mean(j);
    out[j] = static_cast<int>(std::max_element(m.begin(), m.end()) - m.begin());
  }
  return out;
}

namespace {

// Rounding can leave mean entries a hair below zero.
double entropy_of(std::vector<double> p) {
  for (double& v : p) v = std::max(v, 0.0);
  return entropy(p);
}

}  // namespace

double bald_score(const McPredictions& mc, std::size_t token) {
  if (token >= mc.length()) throw std::out_of_range("bald_score: token index out of range");
  const double T = static_cast<double>(mc.passes());
  const double h0 = entropy(mc.row(0, token));
  double mean_h = h0;
  for (std::size_t t = 1; t < mc.passes(); ++t) mean_h += (entropy(mc.row(t, token)) - h0) / T;
  const auto m = mc.mean(token);
  const double h_mean = entropy_of(m);
  return std::max(0.0, h_mean - mean_h);
}

double confidence_score(const McPredictions& mc, std::size_t token, int pseudo) {
  if (token >= mc.length()) throw std::out_of_range("confidence_score: token index out of range");
  if (pseudo < 0 || static_cast<std::size_t>(pseudo) >= mc.classes()) {
    throw std::out_of_range("confidence_score: class index out of range");
  }
  return std::clamp(mc.mean(token)[pseudo], 0.0, 1.0);
}

double certainty_score(double bald, std::size_t num_classes) {
  if (num_classes < 2) throw std::invalid_argument("certainty_score: need at least 2 classes");
  if (bald < 0.0) throw std::invalid_argument("certainty_score: negative BALD score");
  return std::clamp(1.0 - bald / std::log(static_cast<double>(num_classes)), 0.0, 1.0);
}

std::vector<double> sampling_weights(std::span<const double> confidence, std::span<const double> certainty,
                                     bool* fell_back) {
  if (confidence.size() != certainty.size()) throw std::invalid_argument("sampling_weights: length mismatch");
  const std::size_t L = confidence.size();
  if (fell_back) *fell_back = false;
  if (L == 0) return {};
  std::vector<double> w(L);
  double total = 0.0;
  for (std::size_t j = 0; j < L; ++j) {
    if (confidence[j] < 0.0 || certainty[j] < 0.0) throw std::invalid_argument("sampling_weights: negative score");
    w[j] = confidence[j] * certainty[j];
    total += w[j];
  }
  if (!(total > 0.0)) {
    spdlog::warn("sampling weights: all products are zero, using uniform weights");
    if (fell_back) *fell_back = true;
    std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(L));
    return w;
  }
  for (double& v : w) v /= total;
  return w;
}

std::string to_string(SelectionMode mode) { return mode == SelectionMode::kTop ? "top" : "weighted"; }

SelectionMode parse_selection_mode(std::string_view name) {
  if (name == "weighted") return SelectionMode::kWeighted;
  if (name == "top") return SelectionMode::kTop;
  throw std::invalid_argument(fmt::format("selection mode: expected weighted or top, got '{}'", name));
}

std::size_t selection_budget(std::size_t length, double rho) {
  if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument(fmt::format("rho {} not in (0, 1]", rho));
  if (length == 0) return 0;
  // The small slack absorbs rounding in products such as (2/3)·3.
  const auto n = static_cast<std::size_t>(std::ceil(rho * static_cast<double>(length) - 1e-9));
  return std::clamp<std::size_t>(n, 1, length);
}

std::vector<char> select_tokens(std::span<const double> weights, double rho, std::uint64_t seed,
                                SelectionMode mode) {
  const std::size_t L = weights.size();
  const std::size_t n = selection_budget(L, rho);
  std::vector<char> mask(L, 0);
  if (n == L) {
    std::fill(mask.begin(), mask.end(), 1);
    return mask;
  }
  if (mode == SelectionMode::kTop) {
    std::vector<std::size_t> order(L);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return weights[a] > weights[b]; });
    for (std::size_t i = 0; i < n; ++i) mask[order[i]] = 1;
    return mask;
  }
  std::mt19937_64 rng(seed);
  for (std::size_t draw = 0; draw < n; ++draw) {
    double remaining = 0.0;
    for (std::size_t j = 0; j < L; ++j)
      if (!mask[j]) remaining += std::max(weights[j], 0.0);
    std::size_t pick = L;
    if (remaining > 0.0) {
      double u = uniform01(rng) * remaining;
      for (std::size_t j = 0; j < L; ++j) {
        if (mask[j] || weights[j] <= 0.0) continue;
        pick = j;
        u -= weights[j];
        if (u < 0.0) break;
      }
    } else {
      // Only zero-weight tokens remain: draw uniformly among them.
      std::vector<std::size_t> open;
      for (std::size_t j = 0; j < L; ++j)
        if (!mask[j]) open.push_back(j);
      pick = open[uniform_index(rng, open.size())];
    }
    mask[pick] = 1;
  }
  return mask;
}

std::string to_string(ScoreStrategy strategy) {
  switch (strategy) {
    case ScoreStrategy::kNone: return "none";
    case ScoreStrategy::kConfidence: return "confidence";
    case ScoreStrategy::kCertainty: return "certainty";
    case ScoreStrategy::kBoth: return "both";
  }
  return "unknown";
}

TagSequence SelectionReport::pseudo_tags() const {
  TagSequence out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.pseudo);
  return out;
}

std::vector<char> SelectionReport::mask() const {
  std::vector<char> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.selected ? 1 : 0);
  return out;
}

SelectionReport build_selection(const McPredictions& mc, double rho, std::uint64_t seed, SelectionMode mode,
                                ScoreStrategy strategy) {
  const std::size_t L = mc.length();
  SelectionReport report;
  report.tokens.resize(L);
  const TagSequence pseudo = pseudo_annotate(mc);
  std::vector<double> cf(L), ct(L);
  for (std::size_t j = 0; j < L; ++j) {
    auto& tok = report.tokens[j];
    tok.pseudo = pseudo[j];
    tok.bald = bald_score(mc, j);
    tok.confidence = confidence_score(mc, j, pseudo[j]);
    tok.certainty = certainty_score(tok.bald, mc.classes());
    cf[j] = strategy == ScoreStrategy::kCertainty ? 1.0 : tok.confidence;
    ct[j] = strategy == ScoreStrategy::kConfidence ? 1.0 : tok.certainty;
  }
  if (L == 0) return report;
  const auto w = sampling_weights(cf, ct, &report.uniform_fallback);
  const auto mask = strategy == ScoreStrategy::kNone ? std::vector<char>(L, 1) : select_tokens(w, rho, seed, mode);
  for (std::size_t j = 0; j < L; ++j) {
    report.tokens[j].weight = w[j];
    report.tokens[j].selected = mask[j] != 0;
    report.selected_count += mask[j] ? 1 : 0;
  }
  return report;
}

void write_selection_records(std::ostream& out, std::size_t sentence_id, const Sentence& sentence,
                             const SelectionReport& report, const LabelScheme& scheme) {
  for (std::size_t j = 0; j < report.tokens.size(); ++j) {
    const auto& t = report.tokens[j];
    nlohmann::ordered_json rec;
    rec["sentence"] = sentence_id;
    rec["position"] = j;
    rec["token"] = sentence.tokens[j];
    rec["pseudo"] = scheme.tag(t.pseudo);
    rec["bald"] = t.bald;
    rec["confidence"] = t.confidence;
    rec["certainty"] = t.certainty;
    rec["weight"] = t.weight;
    rec["selected"] = t.selected ? 1 : 0;
    out << rec.dump() << '\n';
  }
}

}  // namespace sequst
