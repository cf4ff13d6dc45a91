#include "qattack/reference_models.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include "qattack/error.hpp"

namespace qattack {

namespace {

const std::unordered_set<std::string>& stopwords() {
  static const std::unordered_set<std::string> words = {
      "a",    "an",    "the",  "of",   "in",    "on",    "at",    "to",   "for",  "by",
      "with", "from",  "and",  "or",   "is",    "are",   "was",   "were", "be",   "been",
      "do",   "does",  "did",  "has",  "have",  "had",   "it",    "its",  "this", "that",
      "as",   "into",  "than", "then", "there", "their", "they",  "he",   "she",  "his",
      "her",  "these", "those", "not", "but",   "s",     "can",   "could", "would", "will"};
  return words;
}

const std::unordered_set<std::string>& wh_words() {
  static const std::unordered_set<std::string> words = {"who",   "what", "when", "where",
                                                        "why",   "how",  "which", "whom",
                                                        "whose"};
  return words;
}

bool token_has_digit(const std::string& t) {
  return std::any_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

// Per-position decay-weighted sums. left_decay[s] covers tokens s-1..s-W,
// right_decay[e] covers e+1..e+W.
void decay_sums(const std::vector<double>& m, std::vector<double>& left, std::vector<double>& right) {
  const size_t n = m.size();
  left.assign(n, 0.0);
  right.assign(n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    for (size_t d = 1; d <= kOverlapWindow; ++d) {
      if (i >= d) left[i] += m[i - d] / static_cast<double>(d);
      if (i + d < n) right[i] += m[i + d] / static_cast<double>(d);
    }
  }
}

std::vector<double> prefix_sums(const std::vector<double>& v) {
  std::vector<double> p(v.size() + 1, 0.0);
  for (size_t i = 0; i < v.size(); ++i) p[i + 1] = p[i] + v[i];
  return p;
}

double window_count(const std::vector<double>& prefix, size_t lo, size_t hi) {
  // sum of v[lo..hi), clamped
  hi = std::min(hi, prefix.size() - 1);
  if (lo >= hi) return 0.0;
  return prefix[hi] - prefix[lo];
}

}  // namespace

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool is_stopword(std::string_view t) { return stopwords().count(std::string(t)) > 0; }
bool is_wh_word(std::string_view t) { return wh_words().count(std::string(t)) > 0; }

std::unordered_set<std::string> question_terms(const TokenizedText& question) {
  std::unordered_set<std::string> terms;
  for (const auto& tok : question.tokens) {
    if (is_punctuation_token(tok)) continue;
    std::string low = lowercase(tok);
    if (is_stopword(low) || is_wh_word(low)) continue;
    terms.insert(std::move(low));
  }
  return terms;
}

std::vector<CandidateSpan> enumerate_spans(const TokenizedText& context, size_t max_span_tokens) {
  const size_t n = context.size();
  std::vector<char> edge(n);
  std::vector<CandidateSpan> spans;
  auto collect = [&] {
    for (size_t s = 0; s < n; ++s) {
      if (!edge[s]) continue;
      for (size_t e = s; e < n && e - s < max_span_tokens; ++e) {
        if (edge[e]) spans.push_back({s, e});
      }
    }
  };
  for (size_t i = 0; i < n; ++i) {
    const auto& t = context.tokens[i];
    edge[i] = !is_punctuation_token(t) && !is_stopword(lowercase(t));
  }
  collect();
  if (spans.empty()) {
    for (size_t i = 0; i < n; ++i) edge[i] = !is_punctuation_token(context.tokens[i]);
    collect();
  }
  if (spans.empty()) {
    std::fill(edge.begin(), edge.end(), 1);
    collect();
  }
  return spans;
}

double OverlapModelConfig::idf(const std::string& lowercase_token) const {
  if (!idf_weights) return 1.0;
  auto it = idf_weights->find(lowercase_token);
  return it == idf_weights->end() ? 1.0 : it->second;
}

void OverlapModelConfig::validate() const {
  if (max_span_tokens < 1) throw Error(ErrorKind::kValidation, "max_span_tokens must be >= 1");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw Error(ErrorKind::kValidation, "temperature must be positive");
  }
  if (idf_weights) {
    for (const auto& [tok, w] : *idf_weights) {
      if (!(w > 0.0) || !std::isfinite(w)) {
        throw Error(ErrorKind::kValidation, "idf weight for '" + tok + "' must be positive");
      }
    }
  }
}

std::vector<double> overlap_scores(const OverlapModelConfig& config, const TokenizedText& question,
                                   const TokenizedText& context,
                                   const std::vector<CandidateSpan>& spans) {
  const auto terms = question_terms(question);
  std::vector<double> m(context.size(), 0.0);
  for (size_t i = 0; i < context.size(); ++i) {
    std::string low = lowercase(context.tokens[i]);
    if (terms.count(low)) m[i] = config.idf(low);
  }
  std::vector<double> left, right;
  decay_sums(m, left, right);
  const auto inside = prefix_sums(m);

  std::vector<double> scores;
  scores.reserve(spans.size());
  for (const auto& sp : spans) {
    const double len = static_cast<double>(sp.end - sp.start + 1);
    const double raw = left[sp.start] + right[sp.end] - (inside[sp.end + 1] - inside[sp.start]);
    scores.push_back(raw / (1.0 + kLengthPenaltySlope * (len - 1.0)));
  }
  return scores;
}

SpanDistribution distribution_from_scores(const TokenizedText& context,
                                          const std::vector<CandidateSpan>& spans,
                                          const std::vector<double>& scores, double temperature,
                                          size_t k) {
  if (spans.empty()) return SpanDistribution({}, k);
  const double best = *std::max_element(scores.begin(), scores.end());
  std::vector<SpanPrediction> preds;
  preds.reserve(spans.size());
  for (size_t i = 0; i < spans.size(); ++i) {
    SpanPrediction p;
    p.start_token = spans[i].start;
    p.end_token = spans[i].end;
    p.probability = std::exp((scores[i] - best) / temperature);
    preds.push_back(std::move(p));
  }
  SpanDistribution dist(std::move(preds), k);
  // Text is filled after truncation so only k substrings are built.
  std::vector<SpanPrediction> kept = dist.spans();
  for (auto& p : kept) p.text = span_text(context, p.start_token, p.end_token);
  return SpanDistribution(std::move(kept), k);
}

SpanDistribution overlap_predict(const OverlapModelConfig& config, const TokenizedText& question,
                                 const TokenizedText& context, size_t k) {
  const auto spans = enumerate_spans(context, config.max_span_tokens);
  return distribution_from_scores(context, spans, overlap_scores(config, question, context, spans),
                                  config.temperature, k);
}

OverlapModel::OverlapModel(OverlapModelConfig config) : config_(std::move(config)) {
  config_.validate();
}

SpanDistribution OverlapModel::predict(const TokenizedText& question, const TokenizedText& context,
                                       size_t k) const {
  return overlap_predict(config_, question, context, k);
}

// ---------------------------------------------------------------------------

FeatureExtractor::FeatureExtractor(const TokenizedText& question, const TokenizedText& context)
    : context_(context) {
  const auto terms = question_terms(question);
  match_.assign(context.size(), 0.0);
  wh_.assign(context.size(), 0.0);
  for (size_t i = 0; i < context.size(); ++i) {
    std::string low = lowercase(context.tokens[i]);
    if (terms.count(low)) match_[i] = 1.0;
    if (is_wh_word(low)) wh_[i] = 1.0;
  }
  match_prefix_ = prefix_sums(match_);
}

FeatureVector FeatureExtractor::operator()(const CandidateSpan& span) const {
  const size_t n = context_.size();
  const size_t s = span.start, e = span.end;
  const size_t left_lo = s >= kOverlapWindow ? s - kOverlapWindow : 0;
  const size_t right_hi = std::min(n, e + 1 + kOverlapWindow);

  FeatureVector f;
  auto& v = f.values;
  v[kInsideOverlap] = window_count(match_prefix_, s, e + 1);
  v[kLeftOverlap] = window_count(match_prefix_, left_lo, s);
  v[kRightOverlap] = window_count(match_prefix_, e + 1, right_hi);
  v[kSpanLength] = static_cast<double>(e - s + 1);
  v[kRelativePosition] = static_cast<double>(s) / static_cast<double>(n);
  double wh = 0.0;
  for (size_t i = left_lo; i < s; ++i) wh += wh_[i];
  for (size_t i = e + 1; i < right_hi; ++i) wh += wh_[i];
  v[kWhWordsInWindow] = wh;
  v[kIdfOverlap] = v[kInsideOverlap] + v[kLeftOverlap] + v[kRightOverlap];
  double ld = 0.0, rd = 0.0;
  for (size_t d = 1; d <= kOverlapWindow; ++d) {
    if (s >= d) ld += match_[s - d] / static_cast<double>(d);
    if (e + d < n) rd += match_[e + d] / static_cast<double>(d);
  }
  v[kLeftDecayOverlap] = ld;
  v[kRightDecayOverlap] = rd;
  const auto& first = context_.tokens[s];
  v[kCapitalizedStart] = std::isupper(static_cast<unsigned char>(first.front())) ? 1.0 : 0.0;
  double digit = 0.0;
  for (size_t i = s; i <= e; ++i) {
    if (token_has_digit(context_.tokens[i])) digit = 1.0;
  }
  v[kContainsDigit] = digit;
  return f;
}

FeatureVector extract_features(const TokenizedText& question, const TokenizedText& context,
                               const CandidateSpan& span) {
  return FeatureExtractor(question, context)(span);
}

// ---------------------------------------------------------------------------

namespace {

double dot(std::span<const double> w, const FeatureVector& f) {
  double s = 0.0;
  for (size_t i = 0; i < kFeatureDim; ++i) s += w[i] * f.values[i];
  return s;
}

// Softmax probabilities of the instance's candidates under w; returns the
// log-partition for the loss.
double softmax(std::span<const double> w, const TrainingInstance& inst, std::vector<double>& probs) {
  probs.resize(inst.features.size());
  double best = -INFINITY;
  for (size_t i = 0; i < probs.size(); ++i) {
    probs[i] = dot(w, inst.features[i]);
    best = std::max(best, probs[i]);
  }
  double z = 0.0;
  for (double& p : probs) {
    p = std::exp(p - best);
    z += p;
  }
  for (double& p : probs) p /= z;
  return best + std::log(z);
}

void check_weights(std::span<const double> weights) {
  if (weights.size() != kFeatureDim) {
    throw Error(ErrorKind::kValidation, "weight vector has wrong dimension");
  }
}

}  // namespace

std::optional<TrainingInstance> make_instance(const LabeledQuery& query, size_t max_span_tokens) {
  const auto& ctx = query.context;
  const size_t a = query.answer.char_start;
  const size_t b = a + query.answer.text.size();
  std::optional<size_t> start, end;
  for (size_t i = 0; i < ctx.size(); ++i) {
    const auto [ts, te] = ctx.offsets[i];
    if (te > a && ts < b && !is_punctuation_token(ctx.tokens[i])) {
      if (!start) start = i;
      end = i;
    }
  }
  if (!start) return std::nullopt;
  // Labels longer than the candidate cap keep their first max_span_tokens tokens.
  if (*end - *start + 1 > max_span_tokens) {
    end = *start + max_span_tokens - 1;
    while (*end > *start && is_punctuation_token(ctx.tokens[*end])) --*end;
  }
  const auto spans = enumerate_spans(ctx, max_span_tokens);
  TrainingInstance inst;
  FeatureExtractor fx(query.question, ctx);
  std::optional<size_t> target;
  inst.features.reserve(spans.size());
  for (size_t i = 0; i < spans.size(); ++i) {
    if (spans[i].start == *start && spans[i].end == *end) target = i;
    inst.features.push_back(fx(spans[i]));
  }
  if (!target) return std::nullopt;
  inst.target = *target;
  return inst;
}

double training_objective(std::span<const double> weights,
                          std::span<const TrainingInstance> instances, double l2) {
  check_weights(weights);
  if (instances.empty()) return 0.0;
  std::vector<double> probs;
  double loss = 0.0;
  for (const auto& inst : instances) {
    const double log_z = softmax(weights, inst, probs);
    loss += log_z - dot(weights, inst.features[inst.target]);
  }
  loss /= static_cast<double>(instances.size());
  double norm = 0.0;
  for (double w : weights) norm += w * w;
  return loss + 0.5 * l2 * norm;
}

std::vector<double> training_gradient(std::span<const double> weights,
                                      std::span<const TrainingInstance> instances, double l2) {
  check_weights(weights);
  std::vector<double> grad(kFeatureDim, 0.0);
  std::vector<double> probs;
  for (const auto& inst : instances) {
    softmax(weights, inst, probs);
    for (size_t c = 0; c < probs.size(); ++c) {
      for (size_t i = 0; i < kFeatureDim; ++i) grad[i] += probs[c] * inst.features[c].values[i];
    }
    for (size_t i = 0; i < kFeatureDim; ++i) grad[i] -= inst.features[inst.target].values[i];
  }
  if (!instances.empty()) {
    for (double& g : grad) g /= static_cast<double>(instances.size());
  }
  for (size_t i = 0; i < kFeatureDim; ++i) grad[i] += l2 * weights[i];
  return grad;
}

SurrogateModel surrogate_train(std::span<const TrainingInstance> instances,
                               const TrainingHyper& hyper) {
  if (instances.empty()) throw Error(ErrorKind::kValidation, "empty training set");
  if (hyper.epochs < 0 || !(hyper.learning_rate > 0.0) || hyper.l2 < 0.0) {
    throw Error(ErrorKind::kValidation, "invalid training hyperparameters");
  }
  SurrogateModel model;
  Rng rng(hyper.seed);
  std::vector<size_t> order(instances.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> probs;
  auto& w = model.weights;
  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    // 1/sqrt(epoch) decay: late epochs refine instead of jittering.
    const double lr = hyper.learning_rate / std::sqrt(static_cast<double>(epoch));
    for (size_t idx : order) {
      const auto& inst = instances[idx];
      softmax(w, inst, probs);
      std::array<double, kFeatureDim> grad{};
      for (size_t c = 0; c < probs.size(); ++c) {
        for (size_t i = 0; i < kFeatureDim; ++i) grad[i] += probs[c] * inst.features[c].values[i];
      }
      for (size_t i = 0; i < kFeatureDim; ++i) {
        grad[i] -= inst.features[inst.target].values[i];
        w[i] -= lr * (grad[i] + hyper.l2 * w[i]);
      }
    }
    const double loss = training_objective(w, instances, hyper.l2);
    if (!std::isfinite(loss)) {
      throw Error(ErrorKind::kRuntime,
                  "training diverged (non-finite loss) in epoch " + std::to_string(epoch));
    }
  }
  model.training_meta.epochs = hyper.epochs;
  model.training_meta.learning_rate = hyper.learning_rate;
  model.training_meta.final_loss = training_objective(w, instances, hyper.l2);
  model.training_meta.seed = hyper.seed;
  return model;
}

SurrogateModel surrogate_train(std::span<const LabeledQuery> dataset, const TrainingHyper& hyper) {
  if (dataset.empty()) throw Error(ErrorKind::kValidation, "empty training set");
  std::vector<TrainingInstance> instances;
  instances.reserve(dataset.size());
  for (const auto& q : dataset) {
    if (auto inst = make_instance(q, SurrogateModel{}.max_span_tokens)) {
      instances.push_back(std::move(*inst));
    }
  }
  if (instances.empty()) {
    throw Error(ErrorKind::kValidation, "no labeled answer maps onto a candidate span");
  }
  return surrogate_train(instances, hyper);
}

SpanDistribution surrogate_predict(const SurrogateModel& model, const TokenizedText& question,
                                   const TokenizedText& context, size_t k) {
  if (model.feature_spec_version != kFeatureSpecVersion) {
    throw Error(ErrorKind::kValidation,
                "surrogate feature spec version " + std::to_string(model.feature_spec_version) +
                    " does not match extractor version " + std::to_string(kFeatureSpecVersion));
  }
  check_weights(model.weights);
  const auto spans = enumerate_spans(context, model.max_span_tokens);
  FeatureExtractor fx(question, context);
  std::vector<double> scores;
  scores.reserve(spans.size());
  for (const auto& sp : spans) scores.push_back(dot(model.weights, fx(sp)) + model.bias);
  return distribution_from_scores(context, spans, scores, 1.0, k);
}

SurrogateSpanModel::SurrogateSpanModel(SurrogateModel model) : model_(std::move(model)) {
  if (model_.feature_spec_version != kFeatureSpecVersion) {
    throw Error(ErrorKind::kValidation, "surrogate feature spec version mismatch");
  }
}

SpanDistribution SurrogateSpanModel::predict(const TokenizedText& question,
                                             const TokenizedText& context, size_t k) const {
  return surrogate_predict(model_, question, context, k);
}

// ---------------------------------------------------------------------------
// Text format, one "key value..." per line. Reals are written as C99 hex
// floats so the round trip is bit-exact.

namespace {

std::string hexfloat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_real(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') {
    throw Error(ErrorKind::kParse, "surrogate file: bad real '" + s + "'");
  }
  return v;
}

}  // namespace

std::string serialize_surrogate(const SurrogateModel& model) {
  std::ostringstream out;
  out << "qattack-surrogate 1\n";
  out << "feature_spec_version " << model.feature_spec_version << "\n";
  out << "max_span_tokens " << model.max_span_tokens << "\n";
  out << "dimension " << model.weights.size() << "\n";
  out << "weights";
  for (double w : model.weights) out << ' ' << hexfloat(w);
  out << "\n";
  out << "bias " << hexfloat(model.bias) << "\n";
  out << "epochs " << model.training_meta.epochs << "\n";
  out << "learning_rate " << hexfloat(model.training_meta.learning_rate) << "\n";
  out << "final_loss " << hexfloat(model.training_meta.final_loss) << "\n";
  out << "scheme " << (model.training_meta.scheme.empty() ? "-" : model.training_meta.scheme)
      << "\n";
  out << "seed " << model.training_meta.seed << "\n";
  return out.str();
}

SurrogateModel parse_surrogate(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != "qattack-surrogate 1") {
    throw Error(ErrorKind::kParse, "surrogate file: missing 'qattack-surrogate 1' header");
  }
  SurrogateModel m;
  m.weights.clear();
  size_t dimension = 0;
  bool have_weights = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string key, value;
    fields >> key;
    try {
      if (key == "feature_spec_version") {
        fields >> m.feature_spec_version;
      } else if (key == "max_span_tokens") {
        fields >> m.max_span_tokens;
      } else if (key == "dimension") {
        fields >> dimension;
      } else if (key == "weights") {
        while (fields >> value) m.weights.push_back(parse_real(value));
        have_weights = true;
      } else if (key == "bias") {
        fields >> value;
        m.bias = parse_real(value);
      } else if (key == "epochs") {
        fields >> m.training_meta.epochs;
      } else if (key == "learning_rate") {
        fields >> value;
        m.training_meta.learning_rate = parse_real(value);
      } else if (key == "final_loss") {
        fields >> value;
        m.training_meta.final_loss = parse_real(value);
      } else if (key == "scheme") {
        fields >> value;
        m.training_meta.scheme = value == "-" ? "" : value;
      } else if (key == "seed") {
        fields >> m.training_meta.seed;
      } else {
        throw Error(ErrorKind::kParse, "surrogate file: unknown key '" + key + "'");
      }
    } catch (const std::ios_base::failure&) {
      throw Error(ErrorKind::kParse, "surrogate file: bad value for '" + key + "'");
    }
    if (fields.fail() && !fields.eof()) {
      throw Error(ErrorKind::kParse, "surrogate file: bad value for '" + key + "'");
    }
  }
  if (!have_weights || m.weights.size() != dimension) {
    throw Error(ErrorKind::kParse, "surrogate file: weight count does not match dimension");
  }
  for (double w : m.weights) {
    if (!std::isfinite(w)) throw Error(ErrorKind::kParse, "surrogate file: non-finite weight");
  }
  return m;
}

void save_surrogate(const SurrogateModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << serialize_surrogate(model);
  if (!out) throw Error(ErrorKind::kIo, "write failed: " + path.string());
}

SurrogateModel load_surrogate(const std::filesystem::path& path) {
  return parse_surrogate(read_file(path));
}

}  // namespace qattack
