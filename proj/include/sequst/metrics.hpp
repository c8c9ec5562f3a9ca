#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "sequst/data.hpp"

namespace sequst {

struct EntitySpan {
  std::size_t sentence = 0;
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive
  int cls = 0;

  friend auto operator<=>(const EntitySpan&, const EntitySpan&) = default;
};

/// CoNLL-style BIO decoding. A stray I-X without an open X span opens a new
/// span; the number of such repairs is reported through `repairs`.
std::vector<EntitySpan> decode_spans(const TagSequence& tags, std::size_t sentence = 0,
                                     std::size_t* repairs = nullptr);
TagSequence encode_spans(const std::vector<EntitySpan>& spans, std::size_t length);

struct ClassScore {
  std::size_t gold = 0, predicted = 0, correct = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct MetricsReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t gold_spans = 0, predicted_spans = 0, correct_spans = 0;
  std::size_t tokens = 0;
  std::vector<ClassScore> per_class;
};

double f1_score(double precision, double recall);

/// Exact-match micro-F1 over spans (boundaries and class must agree).
MetricsReport entity_f1(const std::vector<EntitySpan>& gold, const std::vector<EntitySpan>& predicted,
                        std::size_t num_classes);

/// Decodes every sentence of both sides and scores them.
MetricsReport evaluate_tags(const std::vector<TagSequence>& gold, const std::vector<TagSequence>& predicted,
                            std::size_t num_classes);

}  // namespace sequst
