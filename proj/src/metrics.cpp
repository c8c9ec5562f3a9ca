#include "sequst/metrics.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace sequst {

std::vector<EntitySpan> decode_spans(const TagSequence& tags, std::size_t sentence, std::size_t* repairs) {
  std::vector<EntitySpan> spans;
  std::size_t fixed = 0;
  bool open = false;
  EntitySpan cur;
  auto close = [&](std::size_t end) {
    if (!open) return;
    cur.end = end;
    spans.push_back(cur);
    open = false;
  };
  for (std::size_t j = 0; j < tags.size(); ++j) {
    const int tag = tags[j];
    if (tag == LabelScheme::outside()) {
      close(j);
    } else if (LabelScheme::is_begin(tag)) {
      close(j);
      cur = {sentence, j, j, LabelScheme::class_of(tag)};
      open = true;
    } else {
      const int cls = LabelScheme::class_of(tag);
      if (open && cur.cls == cls) continue;
      close(j);
      ++fixed;
      cur = {sentence, j, j, cls};
      open = true;
    }
  }
  close(tags.size());
  if (repairs) *repairs += fixed;
  return spans;
}

TagSequence encode_spans(const std::vector<EntitySpan>& spans, std::size_t length) {
  TagSequence tags(length, LabelScheme::outside());
  for (const auto& s : spans) {
    if (s.start >= s.end || s.end > length) throw std::invalid_argument("encode_spans: span out of range");
    tags[s.start] = LabelScheme::begin_of(s.cls);
    for (std::size_t j = s.start + 1; j < s.end; ++j) tags[j] = LabelScheme::inside_of(s.cls);
  }
  return tags;
}

double f1_score(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

MetricsReport entity_f1(const std::vector<EntitySpan>& gold, const std::vector<EntitySpan>& predicted,
                        std::size_t num_classes) {
  MetricsReport r;
  r.per_class.resize(num_classes);
  const std::set<EntitySpan> gold_set(gold.begin(), gold.end());
  const std::set<EntitySpan> pred_set(predicted.begin(), predicted.end());
  for (const auto& s : gold_set) {
    if (static_cast<std::size_t>(s.cls) < num_classes) ++r.per_class[s.cls].gold;
  }
  for (const auto& s : pred_set) {
    if (static_cast<std::size_t>(s.cls) < num_classes) ++r.per_class[s.cls].predicted;
    if (gold_set.contains(s)) {
      ++r.correct_spans;
      if (static_cast<std::size_t>(s.cls) < num_classes) ++r.per_class[s.cls].correct;
    }
  }
  r.gold_spans = gold_set.size();
  r.predicted_spans = pred_set.size();
  r.precision = r.predicted_spans ? static_cast<double>(r.correct_spans) / r.predicted_spans : 0.0;
  r.recall = r.gold_spans ? static_cast<double>(r.correct_spans) / r.gold_spans : 0.0;
  r.f1 = f1_score(r.precision, r.recall);
  for (auto& c : r.per_class) {
    c.precision = c.predicted ? static_cast<double>(c.correct) / c.predicted : 0.0;
    c.recall = c.gold ? static_cast<double>(c.correct) / c.gold : 0.0;
    c.f1 = f1_score(c.precision, c.recall);
  }
  return r;
}

MetricsReport evaluate_tags(const std::vector<TagSequence>& gold, const std::vector<TagSequence>& predicted,
                            std::size_t num_classes) {
  if (gold.size() != predicted.size()) throw std::invalid_argument("evaluate_tags: sentence count mismatch");
  std::vector<EntitySpan> g, p;
  std::size_t tokens = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].size() != predicted[i].size()) {
      throw std::invalid_argument("evaluate_tags: length mismatch in sentence " + std::to_string(i));
    }
    tokens += gold[i].size();
    auto gs = decode_spans(gold[i], i);
    auto ps = decode_spans(predicted[i], i);
    g.insert(g.end(), gs.begin(), gs.end());
    p.insert(p.end(), ps.begin(), ps.end());
  }
  MetricsReport r = entity_f1(g, p, num_classes);
  r.tokens = tokens;
  return r;
}

}  // namespace sequst
