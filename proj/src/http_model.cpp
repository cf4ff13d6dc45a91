#include "qattack/http_model.hpp"

#include <chrono>
#include <cmath>
#include <map>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "qattack/error.hpp"

namespace qattack {

namespace {

struct ParsedUrl {
  std::string scheme_host_port;
  std::string path_prefix;
};

ParsedUrl parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos || url.compare(0, scheme_end, "http") != 0) {
    throw Error(ErrorKind::kValidation, "endpoint URL must start with http://: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  if (path_start == std::string::npos) {
    out.scheme_host_port = url;
  } else {
    out.scheme_host_port = url.substr(0, path_start);
    out.path_prefix = url.substr(path_start);
    while (!out.path_prefix.empty() && out.path_prefix.back() == '/') out.path_prefix.pop_back();
  }
  return out;
}

template <typename Duration>
auto to_duration(double seconds) {
  return std::chrono::duration_cast<Duration>(std::chrono::duration<double>(seconds));
}

// One POST without retries. Transport failures are thrown as kTransport or
// kTimeout and are the only kinds the caller retries.
std::string post_once(const ModelEndpoint& endpoint, const ParsedUrl& url,
                      const std::string& body) {
  httplib::Client client(url.scheme_host_port);
  const auto timeout = to_duration<std::chrono::microseconds>(endpoint.timeout_seconds);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers headers;
  if (endpoint.auth_token) headers.emplace("Authorization", "Bearer " + *endpoint.auth_token);

  const auto started = std::chrono::steady_clock::now();
  auto res = client.Post(url.path_prefix + "/v1/predict", headers, body, "application/json");
  if (!res) {
    const auto err = res.error();
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                           (err == httplib::Error::Read && elapsed >= endpoint.timeout_seconds);
    throw Error(timed_out ? ErrorKind::kTimeout : ErrorKind::kTransport,
                "POST " + endpoint.base_url + ": " + httplib::to_string(err));
  }
  if (res->status < 200 || res->status >= 300) {
    std::string message = "HTTP " + std::to_string(res->status);
    auto parsed = nlohmann::json::parse(res->body, nullptr, false);
    if (parsed.is_object() && parsed.contains("error") && parsed["error"].is_string()) {
      message += ": " + parsed["error"].get<std::string>();
    }
    throw Error(ErrorKind::kHttpStatus, message);
  }
  return res->body;
}

std::string post_with_retry(const ModelEndpoint& endpoint, const ParsedUrl& url,
                            const std::string& body, const RetryPolicy& retry) {
  for (int attempt = 0;; ++attempt) {
    try {
      return post_once(endpoint, url, body);
    } catch (const Error& e) {
      const bool transport = e.kind() == ErrorKind::kTransport || e.kind() == ErrorKind::kTimeout;
      if (!transport || attempt >= retry.max_retries) throw;
    }
    const double delay = retry.backoff_base_seconds * std::ldexp(1.0, attempt);
    std::this_thread::sleep_for(to_duration<std::chrono::microseconds>(delay));
  }
}

[[noreturn]] void schema_error(const std::string& what) {
  throw Error(ErrorKind::kSchema, "response schema violation: " + what);
}

}  // namespace

void ModelEndpoint::validate() const {
  parse_url(base_url);
  if (max_batch < 1) throw Error(ErrorKind::kValidation, "max_batch must be >= 1");
  if (!(timeout_seconds > 0.0)) throw Error(ErrorKind::kValidation, "timeout must be positive");
}

std::string encode_request(std::span<const WireItem> items, size_t top_k) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& it : items) arr.push_back({{"question", it.question}, {"context", it.context}});
  nlohmann::ordered_json doc = {{"items", std::move(arr)}, {"top_k", top_k}};
  return doc.dump();
}

std::vector<WireResult> decode_response(std::string_view body, size_t expected_items) {
  auto doc = nlohmann::json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) schema_error("body is not a JSON object");
  if (!doc.contains("results") || !doc["results"].is_array()) schema_error("missing results array");
  const auto& results = doc["results"];
  if (results.size() != expected_items) {
    schema_error("misaligned results: " + std::to_string(results.size()) + " for " +
                 std::to_string(expected_items) + " items");
  }
  std::vector<WireResult> out;
  out.reserve(results.size());
  for (size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    const std::string where = "results[" + std::to_string(i) + "]";
    if (!r.is_object() || !r.contains("spans") || !r["spans"].is_array()) {
      schema_error(where + " has no spans array");
    }
    WireResult wr;
    for (const auto& s : r["spans"]) {
      if (!s.is_object() || !s.contains("text") || !s["text"].is_string() ||
          !s.contains("char_start") || !s["char_start"].is_number_integer() ||
          !s.contains("char_end") || !s["char_end"].is_number_integer() ||
          !s.contains("probability") || !s["probability"].is_number()) {
        schema_error(where + " has a malformed span");
      }
      const auto start = s["char_start"].get<long long>();
      const auto end = s["char_end"].get<long long>();
      const double p = s["probability"].get<double>();
      if (start < 0 || end <= start) schema_error(where + " has an empty or negative span");
      if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
        schema_error(where + " has probability outside [0, 1]");
      }
      wr.spans.push_back({s["text"].get<std::string>(), static_cast<size_t>(start),
                          static_cast<size_t>(end), p});
    }
    out.push_back(std::move(wr));
  }
  return out;
}

std::vector<WireResult> http_predict(const ModelEndpoint& endpoint,
                                     std::span<const WireItem> items, size_t top_k,
                                     const RetryPolicy& retry) {
  endpoint.validate();
  const ParsedUrl url = parse_url(endpoint.base_url);
  std::vector<WireResult> out;
  out.reserve(items.size());
  for (size_t begin = 0; begin < items.size(); begin += endpoint.max_batch) {
    const auto chunk = items.subspan(begin, std::min(endpoint.max_batch, items.size() - begin));
    const std::string body = post_with_retry(endpoint, url, encode_request(chunk, top_k), retry);
    auto decoded = decode_response(body, chunk.size());
    for (auto& r : decoded) out.push_back(std::move(r));
  }
  return out;
}

SpanDistribution to_distribution(const WireResult& result, const TokenizedText& context,
                                 size_t k) {
  const size_t context_cps = byte_to_codepoint(context.raw, context.raw.size());
  std::map<std::pair<size_t, size_t>, double> merged;
  for (const auto& s : result.spans) {
    if (s.char_end > context_cps) schema_error("span ends past the context");
    const size_t b = codepoint_to_byte(context.raw, s.char_start);
    const size_t e = codepoint_to_byte(context.raw, s.char_end);
    std::optional<size_t> first, last;
    for (size_t t = 0; t < context.size(); ++t) {
      if (context.offsets[t].second > b && context.offsets[t].first < e) {
        if (!first) first = t;
        last = t;
      }
    }
    if (!first) schema_error("span covers no context token");
    merged[{*first, *last}] += s.probability;
  }
  std::vector<SpanPrediction> preds;
  for (const auto& [key, p] : merged) {
    preds.push_back({key.first, key.second, span_text(context, key.first, key.second), p});
  }
  if (preds.empty()) return SpanDistribution({}, k);
  double total = 0.0;
  for (const auto& p : preds) total += p.probability;
  if (!(total > 0.0)) schema_error("all span probabilities are zero");
  return SpanDistribution(std::move(preds), k);
}

HttpModel::HttpModel(ModelEndpoint endpoint, RetryPolicy retry)
    : endpoint_(std::move(endpoint)), retry_(retry) {
  endpoint_.validate();
}

SpanDistribution HttpModel::predict(const TokenizedText& question, const TokenizedText& context,
                                    size_t k) const {
  const PredictItem item{&question, &context};
  return predict_batch(std::span(&item, 1), k).front();
}

std::vector<SpanDistribution> HttpModel::predict_batch(std::span<const PredictItem> items,
                                                       size_t k) const {
  std::vector<WireItem> wire;
  wire.reserve(items.size());
  for (const auto& it : items) wire.push_back({it.question->raw, it.context->raw});
  const auto results = http_predict(endpoint_, wire, k, retry_);
  std::vector<SpanDistribution> out;
  out.reserve(items.size());
  for (size_t i = 0; i < items.size(); ++i) {
    try {
      out.push_back(to_distribution(results[i], *items[i].context, k));
    } catch (const Error& e) {
      throw BatchError(e, i);
    }
  }
  return out;
}

}  // namespace qattack
