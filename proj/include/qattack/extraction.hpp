#pragma once

// Synthetic query generation for model extraction. Contexts come from a
// paragraph corpus (WIKI) or from tokens drawn out of it at random (RANDOM);
// queries are random context words behind a question word and before "?".

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "qattack/corpus.hpp"
#include "qattack/error.hpp"
#include "qattack/model.hpp"
#include "qattack/provenance.hpp"
#include "qattack/reference_models.hpp"
#include "qattack/rng.hpp"

namespace qattack {

enum class ExtractionScheme { kWiki, kRandom };

std::string to_string(ExtractionScheme scheme);
ExtractionScheme parse_scheme(std::string_view name);

struct SynthesizedExample {
  TokenizedText query;
  TokenizedText context;
  AnswerSpan victim_answer;
  double victim_probability = 0.0;
};

struct ExtractionDataset {
  ExtractionScheme scheme = ExtractionScheme::kWiki;
  std::vector<SynthesizedExample> examples;
  size_t queries_spent = 0;
  uint64_t seed = 0;
  size_t budget = 0;
};

using LengthRange = std::pair<size_t, size_t>;

struct ExtractionConfig {
  LengthRange query_length{5, 12};
  LengthRange random_context_length{80, 120};
  size_t label_batch = 32;
  size_t workers = 1;
};

inline constexpr std::string_view kQuestionWords[] = {"where", "who", "what", "why"};

TokenizedText gen_context(ExtractionScheme scheme, const CorpusStore& corpus, Rng& rng,
                          LengthRange random_length);
TokenizedText gen_query(const TokenizedText& context, Rng& rng, LengthRange query_length);

// Raised when the victim fails part-way; carries everything labeled before
// the failing batch.
class ExtractionAborted : public Error {
 public:
  ExtractionAborted(const Error& cause, ExtractionDataset partial)
      : Error(cause.kind(), std::string("extraction aborted: ") + cause.what()),
        partial_(std::move(partial)) {}
  const ExtractionDataset& partial() const { return partial_; }

 private:
  ExtractionDataset partial_;
};

ExtractionDataset build_dataset(ExtractionScheme scheme, const SpanModel& victim,
                                const CorpusStore& corpus, size_t budget,
                                const ExtractionConfig& config, uint64_t seed);

std::vector<LabeledQuery> to_labeled(std::span<const SynthesizedExample> examples);

// Last 10% of examples by generation order, at least one when nonempty.
size_t heldout_begin(size_t n);

// Trains on the examples before heldout_begin().
SurrogateModel train_extracted(const ExtractionDataset& dataset, const TrainingHyper& hyper);

// Fraction of examples where `model`'s top-1 answer exactly matches the
// victim label.
double label_agreement(const SpanModel& model, std::span<const SynthesizedExample> examples);

// JSON-lines persistence: a header object, then one record per example.
std::string serialize_dataset(const ExtractionDataset& dataset, const Provenance* provenance = nullptr);
ExtractionDataset parse_dataset(std::string_view text);
void save_dataset(const ExtractionDataset& dataset, const std::filesystem::path& path,
                  const Provenance* provenance = nullptr);
ExtractionDataset load_dataset(const std::filesystem::path& path);

}  // namespace qattack
