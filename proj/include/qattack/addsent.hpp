#pragma once

// Rule-based distractor sentences: mutate the question (antonyms, entity and
// number swaps), pick a fake answer of the gold answer's type, and rewrite
// the pair as a declarative sentence appended to the context.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "qattack/addany.hpp"
#include "qattack/campaign.hpp"
#include "qattack/categories.hpp"
#include "qattack/corpus.hpp"
#include "qattack/model.hpp"
#include "qattack/rng.hpp"

namespace qattack {

struct AntonymLexicon {
  std::unordered_map<std::string, std::string> entries;  // lowercase -> lowercase
};

// Tab-separated "word<TAB>antonym" lines. Each pair is added in both
// directions unless the reverse is listed explicitly.
AntonymLexicon parse_lexicon(std::string_view text);
AntonymLexicon load_lexicon(const std::filesystem::path& path);

struct FakeAnswerTable {
  std::map<AnswerCategory, std::vector<std::string>> rows;

  void validate() const;  // every category present and nonempty
};

// Tab-separated "Category<TAB>fake answer" lines.
FakeAnswerTable parse_fake_answers(std::string_view text);
FakeAnswerTable load_fake_answers(const std::filesystem::path& path);

// Gazetteer entries with their token forms, for same-class replacement.
class EntityTable {
 public:
  explicit EntityTable(const Gazetteers& gazetteers);

  struct Entries {
    std::vector<std::string> display;
    std::vector<std::vector<std::string>> tokens;  // lowercase
  };

  const Entries& places() const { return places_; }
  const Entries& names() const { return names_; }

 private:
  Entries places_;
  Entries names_;
};

struct AddSentResources {
  AntonymLexicon lexicon;
  Gazetteers gazetteers;
  FakeAnswerTable fake_answers;
};

struct AddSentCandidate {
  TokenizedText sentence;
  TokenizedText mutated_query;
  std::string fake_answer;
};

// Nullopt when nothing in the question could be replaced.
std::optional<TokenizedText> mutate_query(const TokenizedText& question,
                                          const AntonymLexicon& lexicon,
                                          const EntityTable& entities, Rng& rng);

// Changes one digit of an all-digit token; never returns the input and never
// introduces a leading zero. Tokens of three or more digits keep their first
// digit.
std::string perturb_digits(const std::string& digits, Rng& rng);

std::string fake_answer(const AnswerSpan& gold, const TokenizedText& context,
                        std::span<const std::string> all_golds, const FakeAnswerTable& table,
                        const AnswerCategorizer& categorizer, Rng& rng);

// Template rewrite keyed on the leading question word. Always ends in ".".
std::string to_declarative(const TokenizedText& mutated_query, const std::string& fake);

// Joins tokens with spaces, attaching punctuation the way prose does.
std::string detokenize(std::span<const std::string> tokens);

// Content tokens (normalized, stopwords removed) shared by `text` and any gold.
bool shares_content_token(const std::string& text, std::span<const std::string> golds);

class AddSentGenerator {
 public:
  explicit AddSentGenerator(const AddSentResources& resources);

  std::vector<AddSentCandidate> gen_candidates(const QAExample& example, Rng& rng,
                                               size_t n) const;

 private:
  const AddSentResources& resources_;
  EntityTable entities_;
  AnswerCategorizer categorizer_;
};

struct Selection {
  TransferRecord record;
  std::optional<size_t> chosen;
};

// Evaluates the victim on every candidate and keeps the one with the lowest
// post-attack F1 (first on ties). With no candidates the record is marked
// failed and carries the unperturbed F1.
Selection select_best(std::span<const AddSentCandidate> candidates, const SpanModel& victim,
                      const QAExample& example, Placement placement);

std::optional<size_t> select_one(std::span<const AddSentCandidate> candidates, Rng& rng);

TransferRecord evaluate_candidate(const AddSentCandidate* candidate, const SpanModel& victim,
                                  const QAExample& example, Placement placement, Method method);

}  // namespace qattack
