#pragma once

// Greedy token-swap attack. A sequence of d random common words is appended
// to the context; each position is then repeatedly swapped for the sampled
// candidate that minimizes the search model's expected F1. ARGMAX mode stops
// once the top span has F1 0; KBEST mode only stops once all k best spans do,
// and otherwise returns the sequence minimizing expected F1 over the k best.

#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qattack/corpus.hpp"
#include "qattack/model.hpp"
#include "qattack/provenance.hpp"
#include "qattack/rng.hpp"

namespace qattack {

enum class AttackMode { kArgMax, kKBest };
enum class Placement { kSuffix, kPrefix };
enum class Termination { kCriterionMet, kIterationLimit };

std::string to_string(AttackMode mode);
std::string to_string(Placement placement);
std::string to_string(Termination termination);
AttackMode parse_attack_mode(std::string_view name);
Placement parse_placement(std::string_view name);

struct AttackConfig {
  size_t num_tokens = 10;
  size_t candidates_per_step = 20;
  size_t epochs = 3;
  size_t extra_particles = 4;
  size_t extra_epochs = 3;
  AttackMode mode = AttackMode::kArgMax;
  size_t k = 5;  // ignored in ARGMAX mode
  Placement placement = Placement::kSuffix;
  uint64_t seed = 0;
  // Size of the n-best list requested from the search model. ARGMAX takes the
  // expectation over all of it; KBEST over its first k entries.
  size_t search_top_k = 20;

  void validate() const;
  size_t request_k() const { return std::max(search_top_k, k); }
};

// A context with something spliced in front of or behind it. The original
// context starts at byte `context_shift` of the result.
struct Perturbation {
  TokenizedText context;
  size_t context_shift = 0;

  AnswerSpan remap(const AnswerSpan& gold) const {
    return {gold.text, gold.char_start + context_shift};
  }
};

Perturbation apply_perturbation(const TokenizedText& context, const TokenizedText& adversary,
                                Placement placement);
Perturbation apply_perturbation(const TokenizedText& context,
                                const std::vector<std::string>& adversary_tokens,
                                Placement placement);

// True when every gold answer occurs at its remapped offset.
bool answers_preserved(const QAExample& example, const Perturbation& perturbation);

using WordPool = std::shared_ptr<const std::vector<std::string>>;

struct AdversarialSequence {
  std::vector<std::string> tokens;
  std::vector<WordPool> pools;  // one per position
  std::optional<double> objective;
  bool criterion_met = false;
  double top1_f1 = 1.0;
};

struct AttackState {
  const QAExample* example = nullptr;
  std::vector<std::string> golds;
  std::vector<std::string> question_words;  // always among each step's candidates
  std::vector<AdversarialSequence> sequences;
  size_t iteration = 0;
  double best_objective = std::numeric_limits<double>::infinity();
  size_t best_sequence_index = 0;
  size_t model_calls = 0;
  std::optional<size_t> criterion_sequence;  // set once a sequence meets the criterion
  std::vector<double> objective_trace;
  Rng rng;

  bool terminated() const { return criterion_sequence.has_value(); }
};

struct AttackOutcome {
  std::string example_id;
  AttackMode mode = AttackMode::kArgMax;
  Placement placement = Placement::kSuffix;
  TokenizedText perturbed_context;
  std::vector<std::string> adversary_tokens;
  bool success_on_search_model = false;
  double search_top1_f1 = 1.0;
  std::vector<double> objective_trace;
  size_t model_calls = 0;
  Termination terminated_by = Termination::kIterationLimit;
};

// Candidate words for every position: the common words plus the question's
// tokens other than "?", deduplicated in that order. Each step tries every
// question word and fills the rest of its candidate list from this pool.
WordPool build_pool(const QAExample& example, const WordList& wordlist);

AttackState init_attack(const QAExample& example, const AttackConfig& config,
                        const WordList& wordlist, Rng rng);

// ARGMAX: expected F1 over the whole distribution. KBEST: expected F1 over
// the k best spans, renormalized.
double objective(const SpanDistribution& dist, std::span<const std::string> golds,
                 const AttackConfig& config);
bool criterion_met(const SpanDistribution& dist, std::span<const std::string> golds,
                   const AttackConfig& config);

// Appends fresh random sequences (used for the extra particles).
void add_particles(AttackState& state, size_t count, const AttackConfig& config,
                   const WordList& wordlist);

// Scores every sequence whose objective is unknown and refreshes the best.
void evaluate_pending(AttackState& state, const SpanModel& model, const AttackConfig& config);

// One epoch: every position of every sequence, left to right. Stops early
// once a sequence meets the criterion. Each position keeps the candidate
// with the lowest objective; in KBEST mode ties go to the lower expected F1
// over the whole returned list. On a model error the state is left
// untouched.
void attack_step(AttackState& state, const SpanModel& model, const AttackConfig& config);

// Re-scores the best sequence and reports whether it meets the criterion.
bool check_termination(AttackState& state, const SpanModel& model, const AttackConfig& config);

AttackOutcome run_attack(const QAExample& example, const SpanModel& model,
                         const AttackConfig& config, const WordList& wordlist);

// The seed an attack on `example_id` uses, derived from config.seed.
uint64_t example_seed(uint64_t seed, std::string_view example_id);

std::string serialize_outcomes(std::span<const AttackOutcome> outcomes, const std::string& method,
                               const Provenance* provenance = nullptr);
std::vector<AttackOutcome> parse_outcomes(std::string_view text, std::string* method = nullptr);
void save_outcomes(std::span<const AttackOutcome> outcomes, const std::string& method,
                   const std::filesystem::path& path, const Provenance* provenance = nullptr);
std::vector<AttackOutcome> load_outcomes(const std::filesystem::path& path,
                                         std::string* method = nullptr);

}  // namespace qattack
