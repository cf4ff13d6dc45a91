#include "qattack/model.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

#include "qattack/error.hpp"

namespace qattack {

bool span_order_less(const SpanPrediction& a, const SpanPrediction& b) {
  if (a.probability != b.probability) return a.probability > b.probability;
  if (a.start_token != b.start_token) return a.start_token < b.start_token;
  return a.end_token < b.end_token;
}

namespace {

void renormalize(std::vector<SpanPrediction>& spans) {
  double total = 0.0;
  for (const auto& s : spans) total += s.probability;
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw Error(ErrorKind::kRuntime, "span probabilities cannot be renormalized");
  }
  for (auto& s : spans) s.probability /= total;
}

}  // namespace

SpanDistribution::SpanDistribution(std::vector<SpanPrediction> spans, size_t k_requested)
    : spans_(std::move(spans)), k_requested_(k_requested) {
  if (k_requested_ == 0) throw Error(ErrorKind::kValidation, "k must be positive");
  for (const auto& s : spans_) {
    if (!std::isfinite(s.probability) || s.probability < 0.0) {
      throw Error(ErrorKind::kRuntime, "span probability must be finite and nonnegative");
    }
    if (s.end_token < s.start_token) {
      throw Error(ErrorKind::kRuntime, "span end precedes start");
    }
  }
  if (spans_.empty()) return;
  if (spans_.size() > k_requested_) {
    std::partial_sort(spans_.begin(), spans_.begin() + static_cast<long>(k_requested_),
                      spans_.end(), span_order_less);
    spans_.resize(k_requested_);
  } else {
    std::sort(spans_.begin(), spans_.end(), span_order_less);
  }
  renormalize(spans_);
  // Division can merge or split ties; restore the total order.
  std::stable_sort(spans_.begin(), spans_.end(), span_order_less);
}

SpanDistribution SpanDistribution::top_k(size_t k) const {
  std::vector<SpanPrediction> head(spans_.begin(),
                                   spans_.begin() + static_cast<long>(std::min(k, spans_.size())));
  return SpanDistribution(std::move(head), k);
}

std::string span_text(const TokenizedText& context, size_t start_token, size_t end_token) {
  const size_t b = context.offsets.at(start_token).first;
  const size_t e = context.offsets.at(end_token).second;
  return context.raw.substr(b, e - b);
}

std::vector<SpanDistribution> SpanModel::predict_batch(std::span<const PredictItem> items,
                                                       size_t k) const {
  std::vector<SpanDistribution> out;
  out.reserve(items.size());
  for (size_t i = 0; i < items.size(); ++i) {
    try {
      out.push_back(predict(*items[i].question, *items[i].context, k));
    } catch (const Error& e) {
      throw BatchError(e, i);
    } catch (const std::exception& e) {
      throw BatchError(Error(ErrorKind::kModel, e.what()), i);
    }
    if (out.back().empty()) {
      throw BatchError(Error(ErrorKind::kModel, "model returned an empty distribution"), i);
    }
  }
  return out;
}

SpanDistribution predict(const SpanModel& model, const TokenizedText& question,
                         const TokenizedText& context, size_t k) {
  if (k == 0) throw Error(ErrorKind::kValidation, "k must be positive");
  if (question.empty() || context.empty()) {
    throw Error(ErrorKind::kValidation, "question and context must be nonempty");
  }
  SpanDistribution dist;
  try {
    dist = model.predict(question, context, k);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorKind::kModel, e.what());
  }
  if (dist.empty()) throw Error(ErrorKind::kModel, "model returned an empty distribution");
  return dist;
}

std::vector<SpanDistribution> predict_batch(const SpanModel& model,
                                            std::span<const PredictItem> items, size_t k) {
  if (items.empty()) throw Error(ErrorKind::kValidation, "empty prediction batch");
  if (k == 0) throw Error(ErrorKind::kValidation, "k must be positive");
  for (size_t i = 0; i < items.size(); ++i) {
    if (items[i].question->empty() || items[i].context->empty()) {
      throw BatchError(Error(ErrorKind::kValidation, "question and context must be nonempty"), i);
    }
  }
  std::vector<SpanDistribution> out;
  try {
    out = model.predict_batch(items, k);
  } catch (const BatchError&) {
    throw;
  } catch (const Error& e) {
    throw BatchError(e, 0);
  } catch (const std::exception& e) {
    throw BatchError(Error(ErrorKind::kModel, e.what()), 0);
  }
  if (out.size() != items.size()) {
    throw Error(ErrorKind::kModel, "model returned " + std::to_string(out.size()) +
                                       " results for " + std::to_string(items.size()) + " items");
  }
  for (size_t i = 0; i < out.size(); ++i) {
    if (out[i].empty()) {
      throw BatchError(Error(ErrorKind::kModel, "model returned an empty distribution"), i);
    }
  }
  return out;
}

SpanDistribution CountingModel::predict(const TokenizedText& question,
                                        const TokenizedText& context, size_t k) const {
  calls_.fetch_add(1);
  return inner_.predict(question, context, k);
}

std::vector<SpanDistribution> CountingModel::predict_batch(std::span<const PredictItem> items,
                                                           size_t k) const {
  calls_.fetch_add(items.size());
  return inner_.predict_batch(items, k);
}

}  // namespace qattack
