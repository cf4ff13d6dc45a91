#pragma once

// The span-prediction interface consumed by every attack component.

#include <atomic>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "qattack/corpus.hpp"

namespace qattack {

struct SpanPrediction {
  size_t start_token = 0;
  size_t end_token = 0;  // inclusive
  std::string text;
  double probability = 0.0;
};

// Total order on spans: probability descending, then start, then end.
bool span_order_less(const SpanPrediction& a, const SpanPrediction& b);

// Ranked top-k spans. Construction sorts, truncates to k_requested and
// renormalizes the retained probabilities to sum to one.
class SpanDistribution {
 public:
  SpanDistribution() = default;
  SpanDistribution(std::vector<SpanPrediction> spans, size_t k_requested);

  const std::vector<SpanPrediction>& spans() const { return spans_; }
  size_t k_requested() const { return k_requested_; }
  size_t size() const { return spans_.size(); }
  bool empty() const { return spans_.empty(); }
  const SpanPrediction& top() const { return spans_.front(); }

  // The first min(k, size()) spans, renormalized.
  SpanDistribution top_k(size_t k) const;

 private:
  std::vector<SpanPrediction> spans_;
  size_t k_requested_ = 0;
};

// Text of the token span [start, end] as it appears in `context.raw`.
std::string span_text(const TokenizedText& context, size_t start_token, size_t end_token);

struct PredictItem {
  const TokenizedText* question = nullptr;
  const TokenizedText* context = nullptr;
};

class SpanModel {
 public:
  virtual ~SpanModel() = default;

  virtual SpanDistribution predict(const TokenizedText& question, const TokenizedText& context,
                                   size_t k) const = 0;

  // Default maps predict() over the items in order. Remote models override
  // this to batch on the wire.
  virtual std::vector<SpanDistribution> predict_batch(std::span<const PredictItem> items,
                                                      size_t k) const;
};

// Checked entry points. Preconditions are validated, foreign exceptions and
// empty results are turned into ErrorKind::kModel.
SpanDistribution predict(const SpanModel& model, const TokenizedText& question,
                         const TokenizedText& context, size_t k);
std::vector<SpanDistribution> predict_batch(const SpanModel& model,
                                            std::span<const PredictItem> items, size_t k);

// Forwards to another model and counts how many items it was asked to score.
class CountingModel : public SpanModel {
 public:
  explicit CountingModel(const SpanModel& inner) : inner_(inner) {}

  SpanDistribution predict(const TokenizedText& question, const TokenizedText& context,
                           size_t k) const override;
  std::vector<SpanDistribution> predict_batch(std::span<const PredictItem> items,
                                              size_t k) const override;

  size_t calls() const { return calls_.load(); }

 private:
  const SpanModel& inner_;
  mutable std::atomic<size_t> calls_{0};
};

}  // namespace qattack
