#include "qattack/addany.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "qattack/error.hpp"
#include "qattack/metrics.hpp"
#include "qattack/reference_models.hpp"

namespace qattack {

std::string to_string(AttackMode mode) { return mode == AttackMode::kArgMax ? "argmax" : "kbest"; }
std::string to_string(Placement p) { return p == Placement::kSuffix ? "suffix" : "prefix"; }
std::string to_string(Termination t) {
  return t == Termination::kCriterionMet ? "criterion_met" : "iteration_limit";
}

AttackMode parse_attack_mode(std::string_view name) {
  const std::string low = lowercase(name);
  if (low == "argmax") return AttackMode::kArgMax;
  if (low == "kbest") return AttackMode::kKBest;
  throw Error(ErrorKind::kValidation, "unknown attack mode '" + std::string(name) + "'");
}

Placement parse_placement(std::string_view name) {
  const std::string low = lowercase(name);
  if (low == "suffix") return Placement::kSuffix;
  if (low == "prefix") return Placement::kPrefix;
  throw Error(ErrorKind::kValidation, "unknown placement '" + std::string(name) + "'");
}

void AttackConfig::validate() const {
  if (num_tokens < 1) throw Error(ErrorKind::kValidation, "num_tokens must be >= 1");
  if (candidates_per_step < 1) throw Error(ErrorKind::kValidation, "candidates_per_step must be >= 1");
  if (epochs < 1) throw Error(ErrorKind::kValidation, "epochs must be >= 1");
  if (k < 1) throw Error(ErrorKind::kValidation, "k must be >= 1");
  if (search_top_k < 1) throw Error(ErrorKind::kValidation, "search_top_k must be >= 1");
}

Perturbation apply_perturbation(const TokenizedText& context, const TokenizedText& adversary,
                                Placement placement) {
  if (adversary.empty()) return {context, 0};
  if (context.empty()) return {adversary, 0};
  const TokenizedText& first = placement == Placement::kSuffix ? context : adversary;
  const TokenizedText& second = placement == Placement::kSuffix ? adversary : context;
  Perturbation out;
  auto& r = out.context;
  r.raw.reserve(first.raw.size() + second.raw.size() + 1);
  r.raw = first.raw;
  r.raw.push_back(' ');
  const size_t shift = r.raw.size();
  r.raw += second.raw;
  r.tokens = first.tokens;
  r.tokens.insert(r.tokens.end(), second.tokens.begin(), second.tokens.end());
  r.offsets = first.offsets;
  for (const auto& [b, e] : second.offsets) r.offsets.emplace_back(b + shift, e + shift);
  out.context_shift = placement == Placement::kSuffix ? 0 : shift;
  return out;
}

Perturbation apply_perturbation(const TokenizedText& context,
                                const std::vector<std::string>& adversary_tokens,
                                Placement placement) {
  return apply_perturbation(context, join_tokens(adversary_tokens), placement);
}

bool answers_preserved(const QAExample& example, const Perturbation& perturbation) {
  return std::all_of(example.gold_answers.begin(), example.gold_answers.end(),
                     [&](const AnswerSpan& g) {
                       return answer_matches(perturbation.context, perturbation.remap(g));
                     });
}

WordPool build_pool(const QAExample& example, const WordList& wordlist) {
  auto pool = std::make_shared<std::vector<std::string>>();
  std::unordered_set<std::string> seen;
  for (const auto& w : wordlist.words) {
    if (seen.insert(w).second) pool->push_back(w);
  }
  for (const auto& t : example.question.tokens) {
    if (t == "?") continue;
    if (seen.insert(t).second) pool->push_back(t);
  }
  return pool;
}

namespace {

AdversarialSequence random_sequence(const AttackConfig& config, const WordList& wordlist,
                                    const WordPool& pool, Rng& rng) {
  AdversarialSequence seq;
  seq.tokens.reserve(config.num_tokens);
  for (size_t i = 0; i < config.num_tokens; ++i) {
    seq.tokens.push_back(wordlist.words[uniform_index(rng, wordlist.words.size())]);
  }
  seq.pools.assign(config.num_tokens, pool);
  return seq;
}

// Robert Floyd's sampling: `count` distinct indices below n, deterministic
// given the generator state.
std::vector<size_t> sample_distinct(size_t n, size_t count, Rng& rng) {
  count = std::min(count, n);
  std::vector<size_t> out;
  std::unordered_set<size_t> chosen;
  out.reserve(count);
  for (size_t j = n - count; j < n; ++j) {
    const size_t t = std::uniform_int_distribution<size_t>(0, j)(rng);
    if (chosen.insert(t).second) {
      out.push_back(t);
    } else {
      chosen.insert(j);
      out.push_back(j);
    }
  }
  return out;
}

void refresh_best(AttackState& state) {
  for (size_t i = 0; i < state.sequences.size(); ++i) {
    const auto& seq = state.sequences[i];
    if (!seq.objective) continue;
    if (*seq.objective < state.best_objective) {
      state.best_objective = *seq.objective;
      state.best_sequence_index = i;
    }
  }
}

struct Scored {
  double objective = 0.0;
  bool criterion = false;
  double top1_f1 = 0.0;
  // Expected F1 over the whole returned list. Breaks ties in the KBEST
  // objective, which is flat wherever a swap leaves the top k unchanged.
  double tiebreak = 0.0;

  bool better_than(const Scored& o) const {
    return objective < o.objective || (objective == o.objective && tiebreak < o.tiebreak);
  }
};

Scored score_distribution(const SpanDistribution& dist, std::span<const std::string> golds,
                          const AttackConfig& config) {
  const double obj = objective(dist, golds, config);
  return {obj, criterion_met(dist, golds, config), token_f1(dist.top().text, golds),
          config.mode == AttackMode::kArgMax ? obj : expected_f1(dist, golds)};
}

std::vector<Scored> score_candidates(const AttackState& state,
                                     const std::vector<std::vector<std::string>>& candidates,
                                     const SpanModel& model, const AttackConfig& config) {
  const QAExample& ex = *state.example;
  std::vector<TokenizedText> contexts;
  contexts.reserve(candidates.size());
  for (const auto& tokens : candidates) {
    contexts.push_back(apply_perturbation(ex.context, tokens, config.placement).context);
  }
  std::vector<PredictItem> items;
  items.reserve(contexts.size());
  for (const auto& c : contexts) items.push_back({&ex.question, &c});
  const auto dists = predict_batch(model, items, config.request_k());
  std::vector<Scored> out;
  out.reserve(dists.size());
  for (const auto& d : dists) out.push_back(score_distribution(d, state.golds, config));
  return out;
}

}  // namespace

AttackState init_attack(const QAExample& example, const AttackConfig& config,
                        const WordList& wordlist, Rng rng) {
  config.validate();
  if (wordlist.words.empty()) throw Error(ErrorKind::kValidation, "word list is empty");
  AttackState state;
  state.example = &example;
  state.golds = example.gold_texts();
  state.rng = std::move(rng);
  {
    std::unordered_set<std::string> seen;
    for (const auto& t : example.question.tokens) {
      if (t != "?" && seen.insert(t).second) state.question_words.push_back(t);
    }
  }
  state.sequences.push_back(random_sequence(config, wordlist, build_pool(example, wordlist), state.rng));
  return state;
}

double objective(const SpanDistribution& dist, std::span<const std::string> golds,
                 const AttackConfig& config) {
  if (config.mode == AttackMode::kArgMax) return expected_f1(dist, golds);
  return expected_f1(dist.top_k(config.k), golds);
}

bool criterion_met(const SpanDistribution& dist, std::span<const std::string> golds,
                   const AttackConfig& config) {
  return kbest_zero(dist, golds, config.mode == AttackMode::kArgMax ? 1 : config.k);
}

void add_particles(AttackState& state, size_t count, const AttackConfig& config,
                   const WordList& wordlist) {
  const WordPool pool = state.sequences.front().pools.front();
  for (size_t i = 0; i < count; ++i) {
    state.sequences.push_back(random_sequence(config, wordlist, pool, state.rng));
  }
}

void evaluate_pending(AttackState& state, const SpanModel& model, const AttackConfig& config) {
  std::vector<size_t> pending;
  std::vector<std::vector<std::string>> candidates;
  for (size_t i = 0; i < state.sequences.size(); ++i) {
    if (!state.sequences[i].objective) {
      pending.push_back(i);
      candidates.push_back(state.sequences[i].tokens);
    }
  }
  if (pending.empty()) return;
  const auto scored = score_candidates(state, candidates, model, config);
  state.model_calls += scored.size();
  for (size_t j = 0; j < pending.size(); ++j) {
    auto& seq = state.sequences[pending[j]];
    seq.objective = scored[j].objective;
    seq.criterion_met = scored[j].criterion;
    seq.top1_f1 = scored[j].top1_f1;
    if (seq.criterion_met && !state.criterion_sequence) state.criterion_sequence = pending[j];
  }
  refresh_best(state);
  if (state.objective_trace.empty()) state.objective_trace.push_back(state.best_objective);
}

void attack_step(AttackState& state, const SpanModel& model, const AttackConfig& config) {
  if (state.terminated()) return;
  AttackState next = state;
  evaluate_pending(next, model, config);
  for (size_t s = 0; s < next.sequences.size() && !next.terminated(); ++s) {
    for (size_t j = 0; j < config.num_tokens && !next.terminated(); ++j) {
      auto& seq = next.sequences[s];
      const auto& pool = *seq.pools[j];
      const std::string incumbent = seq.tokens[j];

      // Incumbent first, so full ties keep it and the objective never rises.
      // The question's words always make the list; sampled pool words fill
      // it up to candidates_per_step.
      std::vector<std::string> words{incumbent};
      std::unordered_set<std::string> taken{incumbent};
      const size_t limit = config.candidates_per_step + 1;
      for (const auto& w : next.question_words) {
        if (words.size() >= limit) break;
        if (taken.insert(w).second) words.push_back(w);
      }
      for (size_t idx : sample_distinct(pool.size(), limit + words.size(), next.rng)) {
        if (words.size() >= limit) break;
        if (taken.insert(pool[idx]).second) words.push_back(pool[idx]);
      }
      std::vector<std::vector<std::string>> candidates;
      candidates.reserve(words.size());
      for (const auto& w : words) {
        candidates.push_back(seq.tokens);
        candidates.back()[j] = w;
      }
      const auto scored = score_candidates(next, candidates, model, config);
      next.model_calls += scored.size();

      size_t best = 0;
      for (size_t c = 1; c < scored.size(); ++c) {
        if (scored[c].better_than(scored[best])) best = c;
      }
      seq.tokens[j] = words[best];
      seq.objective = scored[best].objective;
      seq.criterion_met = scored[best].criterion;
      seq.top1_f1 = scored[best].top1_f1;
      if (seq.criterion_met) next.criterion_sequence = s;
      refresh_best(next);
    }
  }
  ++next.iteration;
  next.objective_trace.push_back(next.best_objective);
  state = std::move(next);
}

bool check_termination(AttackState& state, const SpanModel& model, const AttackConfig& config) {
  const size_t idx = state.criterion_sequence.value_or(state.best_sequence_index);
  const auto scored = score_candidates(state, {state.sequences[idx].tokens}, model, config);
  ++state.model_calls;
  if (scored.front().criterion && !state.criterion_sequence) state.criterion_sequence = idx;
  return scored.front().criterion;
}

uint64_t example_seed(uint64_t seed, std::string_view example_id) {
  return mix_seed(seed, fnv1a64(example_id));
}

AttackOutcome run_attack(const QAExample& example, const SpanModel& model,
                         const AttackConfig& config, const WordList& wordlist) {
  AttackState state = init_attack(example, config, wordlist, Rng(example_seed(config.seed, example.id)));
  evaluate_pending(state, model, config);
  for (size_t e = 0; e < config.epochs && !state.terminated(); ++e) {
    attack_step(state, model, config);
  }
  if (!state.terminated() && config.extra_particles > 0 && config.extra_epochs > 0) {
    add_particles(state, config.extra_particles, config, wordlist);
    evaluate_pending(state, model, config);
    for (size_t e = 0; e < config.extra_epochs && !state.terminated(); ++e) {
      attack_step(state, model, config);
    }
  }

  const size_t chosen = state.criterion_sequence.value_or(state.best_sequence_index);
  const auto& seq = state.sequences[chosen];
  AttackOutcome out;
  out.example_id = example.id;
  out.mode = config.mode;
  out.placement = config.placement;
  out.adversary_tokens = seq.tokens;
  out.perturbed_context = apply_perturbation(example.context, seq.tokens, config.placement).context;
  out.success_on_search_model = seq.criterion_met;
  out.search_top1_f1 = seq.top1_f1;
  out.objective_trace = state.objective_trace;
  out.model_calls = state.model_calls;
  out.terminated_by = state.terminated() ? Termination::kCriterionMet : Termination::kIterationLimit;
  return out;
}

// ---------------------------------------------------------------------------

std::string serialize_outcomes(std::span<const AttackOutcome> outcomes, const std::string& method,
                               const Provenance* provenance) {
  std::ostringstream out;
  nlohmann::ordered_json header = {{"format", "qattack-outcomes"},
                                   {"method", method},
                                   {"records", outcomes.size()}};
  if (provenance) {
    header["config_hash"] = provenance->config_hash;
    header["seed"] = provenance->seed;
  }
  out << header.dump() << "\n";
  for (const auto& o : outcomes) {
    nlohmann::ordered_json rec = {{"example_id", o.example_id},
                                  {"mode", to_string(o.mode)},
                                  {"adversary", o.adversary_tokens},
                                  {"placement", to_string(o.placement)},
                                  {"objective_trace", o.objective_trace},
                                  {"terminated_by", to_string(o.terminated_by)},
                                  {"model_calls", o.model_calls},
                                  {"success_on_search_model", o.success_on_search_model},
                                  {"search_top1_f1", o.search_top1_f1}};
    out << rec.dump() << "\n";
  }
  return out.str();
}

std::vector<AttackOutcome> parse_outcomes(std::string_view text, std::string* method) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::kParse, "outcomes file is empty");
  auto header = nlohmann::json::parse(line, nullptr, false);
  if (header.is_discarded() || header.value("format", "") != "qattack-outcomes") {
    throw Error(ErrorKind::kParse, "outcomes file: bad header line");
  }
  if (method) *method = header.value("method", "");
  std::vector<AttackOutcome> out;
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto rec = nlohmann::json::parse(line, nullptr, false);
    if (rec.is_discarded()) {
      throw Error(ErrorKind::kParse, "outcomes file line " + std::to_string(lineno) + ": bad JSON");
    }
    try {
      AttackOutcome o;
      o.example_id = rec.at("example_id").get<std::string>();
      o.mode = parse_attack_mode(rec.at("mode").get<std::string>());
      o.adversary_tokens = rec.at("adversary").get<std::vector<std::string>>();
      o.placement = parse_placement(rec.at("placement").get<std::string>());
      o.objective_trace = rec.at("objective_trace").get<std::vector<double>>();
      const auto term = rec.at("terminated_by").get<std::string>();
      o.terminated_by = term == "criterion_met" ? Termination::kCriterionMet
                                                : Termination::kIterationLimit;
      o.model_calls = rec.at("model_calls").get<size_t>();
      o.success_on_search_model = rec.value("success_on_search_model", false);
      o.search_top1_f1 = rec.value("search_top1_f1", 1.0);
      out.push_back(std::move(o));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kParse,
                  "outcomes file line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void save_outcomes(std::span<const AttackOutcome> outcomes, const std::string& method,
                   const std::filesystem::path& path, const Provenance* provenance) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << serialize_outcomes(outcomes, method, provenance);
  if (!out) throw Error(ErrorKind::kIo, "write failed: " + path.string());
}

std::vector<AttackOutcome> load_outcomes(const std::filesystem::path& path, std::string* method) {
  return parse_outcomes(read_file(path), method);
}

}  // namespace qattack
