#pragma once

// In-process span models: a lexical-overlap scorer standing in for the
// victim, and a linear feature-based scorer used as the extracted surrogate.
//
// Overlap scoring rule (replicated independently in tests/oracles.hpp):
//   Q       = lowercased question tokens, minus punctuation, the stopword list
//             below and wh-words.
//   m(i)    = idf(token_i) if lowercase(token_i) is in Q, else 0.
//   left    = sum over d in 1..6 with s-d >= 0 of m(s-d) / d
//   right   = sum over d in 1..6 with e+d <  n of m(e+d) / d
//   inside  = sum over i in s..e of m(i)
//   score   = (left + right - inside) / (1 + 0.25 * (len - 1))
//   p(span) ∝ exp(score / temperature)
// Candidate spans have length <= max_span_tokens and neither start nor end
// on a punctuation token or a stopword. When no span qualifies the stopword
// rule is dropped, then the punctuation rule. Question words inside the span are subtracted, so
// the model prefers spans next to question words rather than restating them.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "qattack/corpus.hpp"
#include "qattack/model.hpp"
#include "qattack/rng.hpp"

namespace qattack {

inline constexpr size_t kOverlapWindow = 6;
inline constexpr double kLengthPenaltySlope = 0.25;

bool is_stopword(std::string_view lowercase_token);
bool is_wh_word(std::string_view lowercase_token);
std::string lowercase(std::string_view s);

// Lowercased content terms of a question (the set Q above).
std::unordered_set<std::string> question_terms(const TokenizedText& question);

struct CandidateSpan {
  size_t start = 0;
  size_t end = 0;  // inclusive
};

std::vector<CandidateSpan> enumerate_spans(const TokenizedText& context, size_t max_span_tokens);

struct OverlapModelConfig {
  size_t max_span_tokens = 8;
  double temperature = 1.0;
  std::optional<std::unordered_map<std::string, double>> idf_weights;

  double idf(const std::string& lowercase_token) const;
  void validate() const;
};

// Scores of every candidate span, in enumerate_spans() order.
std::vector<double> overlap_scores(const OverlapModelConfig& config, const TokenizedText& question,
                                   const TokenizedText& context,
                                   const std::vector<CandidateSpan>& spans);

SpanDistribution overlap_predict(const OverlapModelConfig& config, const TokenizedText& question,
                                 const TokenizedText& context, size_t k);

class OverlapModel : public SpanModel {
 public:
  explicit OverlapModel(OverlapModelConfig config = {});
  SpanDistribution predict(const TokenizedText& question, const TokenizedText& context,
                           size_t k) const override;
  const OverlapModelConfig& config() const { return config_; }

 private:
  OverlapModelConfig config_;
};

// Builds a distribution from raw candidate scores: softmax at `temperature`,
// top-k retained and renormalized.
SpanDistribution distribution_from_scores(const TokenizedText& context,
                                          const std::vector<CandidateSpan>& spans,
                                          const std::vector<double>& scores, double temperature,
                                          size_t k);

// ---------------------------------------------------------------------------
// Features

inline constexpr int kFeatureSpecVersion = 1;
inline constexpr size_t kFeatureDim = 11;

enum FeatureIndex : size_t {
  kInsideOverlap = 0,
  kLeftOverlap,
  kRightOverlap,
  kSpanLength,
  kRelativePosition,
  kWhWordsInWindow,
  kIdfOverlap,
  kLeftDecayOverlap,
  kRightDecayOverlap,
  kCapitalizedStart,
  kContainsDigit,
};

struct FeatureVector {
  std::array<double, kFeatureDim> values{};
};

// Feature extraction for many spans of one (question, context) pair.
class FeatureExtractor {
 public:
  FeatureExtractor(const TokenizedText& question, const TokenizedText& context);
  FeatureVector operator()(const CandidateSpan& span) const;

 private:
  const TokenizedText& context_;
  std::vector<double> match_;  // 1 when token is a question term
  std::vector<double> wh_;     // 1 when token is a wh-word
  std::vector<double> match_prefix_;
};

FeatureVector extract_features(const TokenizedText& question, const TokenizedText& context,
                               const CandidateSpan& span);

// ---------------------------------------------------------------------------
// Surrogate

struct TrainingMeta {
  int epochs = 0;
  double learning_rate = 0.0;
  double final_loss = 0.0;
  std::string scheme;
  uint64_t seed = 0;
};

struct SurrogateModel {
  std::vector<double> weights = std::vector<double>(kFeatureDim, 0.0);
  double bias = 0.0;
  int feature_spec_version = kFeatureSpecVersion;
  size_t max_span_tokens = 8;
  TrainingMeta training_meta;
};

struct TrainingHyper {
  int epochs = 30;
  double learning_rate = 0.1;
  double l2 = 1e-4;
  uint64_t seed = 0;
};

// One training example after featurization: every candidate span of the
// context competes, `target` indexes the labeled one.
struct TrainingInstance {
  std::vector<FeatureVector> features;
  size_t target = 0;
};

struct LabeledQuery {
  TokenizedText question;
  TokenizedText context;
  AnswerSpan answer;
};

// Nullopt when the labeled answer does not cover any candidate span.
std::optional<TrainingInstance> make_instance(const LabeledQuery& query, size_t max_span_tokens);

// Mean cross-entropy plus (l2 / 2) * |w|^2, and its gradient in w.
double training_objective(std::span<const double> weights,
                          std::span<const TrainingInstance> instances, double l2);
std::vector<double> training_gradient(std::span<const double> weights,
                                      std::span<const TrainingInstance> instances, double l2);

SurrogateModel surrogate_train(std::span<const TrainingInstance> instances,
                               const TrainingHyper& hyper);
SurrogateModel surrogate_train(std::span<const LabeledQuery> dataset, const TrainingHyper& hyper);

SpanDistribution surrogate_predict(const SurrogateModel& model, const TokenizedText& question,
                                   const TokenizedText& context, size_t k);

class SurrogateSpanModel : public SpanModel {
 public:
  explicit SurrogateSpanModel(SurrogateModel model);
  SpanDistribution predict(const TokenizedText& question, const TokenizedText& context,
                           size_t k) const override;
  const SurrogateModel& model() const { return model_; }

 private:
  SurrogateModel model_;
};

std::string serialize_surrogate(const SurrogateModel& model);
SurrogateModel parse_surrogate(std::string_view text);
void save_surrogate(const SurrogateModel& model, const std::filesystem::path& path);
SurrogateModel load_surrogate(const std::filesystem::path& path);

}  // namespace qattack
