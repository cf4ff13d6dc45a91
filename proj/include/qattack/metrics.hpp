#pragma once

#include <span>
#include <string>
#include <vector>

#include "qattack/model.hpp"

namespace qattack {

struct MetricResult {
  double f1 = 0.0;
  bool em = false;
};

// Bag-of-tokens F1 after normalize_answer, max over golds.
double token_f1(std::string_view prediction, std::span<const std::string> golds);
bool exact_match(std::string_view prediction, std::span<const std::string> golds);
MetricResult score(std::string_view prediction, std::span<const std::string> golds);

// Sum over retained spans of p(s) * token_f1(s). Throws on an empty distribution.
double expected_f1(const SpanDistribution& dist, std::span<const std::string> golds);

// True iff every one of the k highest-ranked spans has F1 exactly zero.
bool kbest_zero(const SpanDistribution& dist, std::span<const std::string> golds, size_t k);

struct AggregateScore {
  double f1 = 0.0;  // percent
  double em = 0.0;  // percent
};

AggregateScore aggregate(std::span<const MetricResult> records);

}  // namespace qattack
