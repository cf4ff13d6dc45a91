#include "qattack/metrics.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>

#include "qattack/error.hpp"

namespace qattack {

namespace {

std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string w;
  while (in >> w) out.push_back(std::move(w));
  return out;
}

double f1_single(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
  if (pred.empty() || gold.empty()) return pred.empty() && gold.empty() ? 1.0 : 0.0;
  std::unordered_map<std::string, int> counts;
  for (const auto& t : gold) ++counts[t];
  int common = 0;
  for (const auto& t : pred) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / static_cast<double>(pred.size());
  const double recall = static_cast<double>(common) / static_cast<double>(gold.size());
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace

double token_f1(std::string_view prediction, std::span<const std::string> golds) {
  const auto pred = split_words(normalize_answer(prediction));
  double best = 0.0;
  for (const auto& g : golds) best = std::max(best, f1_single(pred, split_words(normalize_answer(g))));
  return best;
}

bool exact_match(std::string_view prediction, std::span<const std::string> golds) {
  const std::string pred = normalize_answer(prediction);
  return std::any_of(golds.begin(), golds.end(),
                     [&](const std::string& g) { return normalize_answer(g) == pred; });
}

MetricResult score(std::string_view prediction, std::span<const std::string> golds) {
  MetricResult r{token_f1(prediction, golds), exact_match(prediction, golds)};
  if (r.em) r.f1 = 1.0;
  return r;
}

double expected_f1(const SpanDistribution& dist, std::span<const std::string> golds) {
  if (dist.empty()) throw Error(ErrorKind::kValidation, "expected_f1 of an empty distribution");
  double total = 0.0;
  for (const auto& s : dist.spans()) total += s.probability * token_f1(s.text, golds);
  return total;
}

bool kbest_zero(const SpanDistribution& dist, std::span<const std::string> golds, size_t k) {
  const size_t n = std::min(k, dist.size());
  for (size_t i = 0; i < n; ++i) {
    if (token_f1(dist.spans()[i].text, golds) != 0.0) return false;
  }
  return true;
}

AggregateScore aggregate(std::span<const MetricResult> records) {
  if (records.empty()) throw Error(ErrorKind::kValidation, "aggregate of zero records");
  double f1 = 0.0, em = 0.0;
  for (const auto& r : records) {
    f1 += r.f1;
    em += r.em ? 1.0 : 0.0;
  }
  const auto n = static_cast<double>(records.size());
  return {100.0 * f1 / n, 100.0 * em / n};
}

}  // namespace qattack
