#pragma once

// Client for remote span-prediction services.
//
//   POST {base_url}/v1/predict
//   request:  {"items": [{"question": str, "context": str}], "top_k": int}
//   response: {"results": [{"spans": [{"text": str, "char_start": int,
//              "char_end": int, "probability": float}]}]}
//
// Offsets on the wire count Unicode code points, char_end exclusive.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qattack/model.hpp"

namespace qattack {

struct ModelEndpoint {
  std::string base_url;
  double timeout_seconds = 30.0;
  size_t max_batch = 16;
  std::optional<std::string> auth_token;

  void validate() const;
};

struct RetryPolicy {
  int max_retries = 3;
  double backoff_base_seconds = 0.5;  // delay before retry r is base * 2^(r-1)
};

struct WireItem {
  std::string question;
  std::string context;
};

struct WireSpan {
  std::string text;
  size_t char_start = 0;
  size_t char_end = 0;
  double probability = 0.0;
};

struct WireResult {
  std::vector<WireSpan> spans;
};

std::string encode_request(std::span<const WireItem> items, size_t top_k);

// Parses and schema-checks a response body for `expected_items` items.
std::vector<WireResult> decode_response(std::string_view body, size_t expected_items);

// Sends the items in chunks of at most endpoint.max_batch, retrying each
// chunk on transport failures. Results are aligned with `items`.
std::vector<WireResult> http_predict(const ModelEndpoint& endpoint,
                                     std::span<const WireItem> items, size_t top_k,
                                     const RetryPolicy& retry = {});

// Maps character spans onto the enclosing token spans of `context`,
// merging spans that land on the same tokens, then renormalizes.
SpanDistribution to_distribution(const WireResult& result, const TokenizedText& context,
                                 size_t k);

class HttpModel : public SpanModel {
 public:
  explicit HttpModel(ModelEndpoint endpoint, RetryPolicy retry = {});

  SpanDistribution predict(const TokenizedText& question, const TokenizedText& context,
                           size_t k) const override;
  std::vector<SpanDistribution> predict_batch(std::span<const PredictItem> items,
                                              size_t k) const override;

  const ModelEndpoint& endpoint() const { return endpoint_; }

 private:
  ModelEndpoint endpoint_;
  RetryPolicy retry_;
};

}  // namespace qattack
