#include "sequst/analysis.hpp"

#include <algorithm>
#include <stdexcept>

#include <json.hpp>

#include "sequst/numerics.hpp"

namespace sequst {

SelectionErrorRate selection_error_rate(const std::vector<SelectionReport>& selections,
                                        const std::vector<TagSequence>& gold) {
  if (selections.size() != gold.size()) throw std::invalid_argument("selection_error_rate: sentence count mismatch");
  SelectionErrorRate out;
  for (std::size_t i = 0; i < selections.size(); ++i) {
    const auto& tokens = selections[i].tokens;
    if (tokens.size() != gold[i].size()) throw std::invalid_argument("selection_error_rate: length mismatch");
    for (std::size_t j = 0; j < tokens.size(); ++j) {
      if (!tokens[j].selected) continue;
      ++out.selected;
      if (tokens[j].pseudo != gold[i][j]) ++out.errors;
    }
  }
  out.rate = out.selected == 0 ? 0.0 : static_cast<double>(out.errors) / static_cast<double>(out.selected);
  return out;
}

std::vector<SelectionErrorRate> selection_error_rates(const std::vector<McPredictions>& predictions,
                                                      const std::vector<TagSequence>& gold, double rho,
                                                      std::uint64_t seed, SelectionMode mode) {
  std::vector<SelectionErrorRate> out;
  for (ScoreStrategy strategy :
       {ScoreStrategy::kNone, ScoreStrategy::kConfidence, ScoreStrategy::kCertainty, ScoreStrategy::kBoth}) {
    std::vector<SelectionReport> selections;
    selections.reserve(predictions.size());
    for (std::size_t i = 0; i < predictions.size(); ++i) {
      const std::uint64_t s = mix_seed(seed, static_cast<std::uint64_t>(Stream::kSelection), i);
      selections.push_back(build_selection(predictions[i], rho, s, mode, strategy));
    }
    SelectionErrorRate rate = selection_error_rate(selections, gold);
    rate.strategy = strategy;
    out.push_back(rate);
  }
  return out;
}

std::vector<McPredictions> mc_predict_all(const SequenceLabeler& model, const std::vector<Sentence>& sentences,
                                          std::size_t t_passes, std::uint64_t seed) {
  std::vector<McPredictions> out;
  out.reserve(sentences.size());
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    out.push_back(mc_predict(model, sentences[i], t_passes,
                             mix_seed(seed, static_cast<std::uint64_t>(Stream::kDropout), i)));
  }
  return out;
}

void export_embeddings(std::ostream& out, const SequenceLabeler& model, const std::vector<Sentence>& sentences) {
  const std::size_t width = model.hidden_width();
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const Sentence& s = sentences[i];
    const EncodedSentence enc = encode(model, s, false, 0);
    const TagSequence tags = s.gold_tags ? *s.gold_tags : predict_tags(model, s);
    for (std::size_t j = 0; j < s.length(); ++j) {
      nlohmann::ordered_json rec;
      rec["sentence"] = i;
      rec["position"] = j;
      rec["token"] = s.tokens[j];
      rec["tag"] = model.scheme().tag(tags[j]);
      const auto row = enc.hidden.values().subspan(j * width, width);
      rec["vector"] = std::vector<double>(row.begin(), row.end());
      out << rec.dump() << '\n';
    }
  }
}

}  // namespace sequst
