#pragma once

// Heuristic answer-type classification into ten categories. Rules are tried
// in priority order; the first match wins:
//   Dates       month or weekday name, d/m/y pattern, decade ("1990s"), "century", season name
//   Numbers     a numeric token or number word, at most 4 words
//   Places      contains a place-gazetteer entry, at most 4 words
//   Names       a person-gazetteer token or an honorific, at most 4 words
//   OtherEnts   at least 2 words, every content word capitalized
//   Clauses     at least 6 words and a finite verb
//   VerbPhrases leading verb (-ing/-ed form, "to", or a known base verb)
//   AdjPhrases  at most 2 words ending in an adjective
//   NounPhrases any other alphabetic answer of at most 5 words
//   Others      everything else

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "qattack/corpus.hpp"

namespace qattack {

enum class AnswerCategory {
  kNames,
  kNumbers,
  kPlaces,
  kDates,
  kOtherEnts,
  kNounPhrases,
  kVerbPhrases,
  kAdjPhrases,
  kClauses,
  kOthers,
};

inline constexpr std::array<AnswerCategory, 10> kAllCategories = {
    AnswerCategory::kNames,       AnswerCategory::kNumbers,     AnswerCategory::kPlaces,
    AnswerCategory::kDates,       AnswerCategory::kOtherEnts,   AnswerCategory::kNounPhrases,
    AnswerCategory::kVerbPhrases, AnswerCategory::kAdjPhrases,  AnswerCategory::kClauses,
    AnswerCategory::kOthers};

std::string to_string(AnswerCategory category);
AnswerCategory parse_category(std::string_view name);

// Entity lists; each entry is kept as written and matched case-insensitively
// on token boundaries.
struct Gazetteers {
  std::vector<std::string> places;
  std::vector<std::string> person_names;
};

std::vector<std::string> load_entry_list(const std::filesystem::path& path);

bool is_month_name(std::string_view lowercase_token);
bool is_number_word(std::string_view lowercase_token);
bool is_numeric_token(std::string_view token);

class AnswerCategorizer {
 public:
  explicit AnswerCategorizer(const Gazetteers& gazetteers);

  AnswerCategory operator()(const AnswerSpan& gold, const TokenizedText& context) const;

  // Index into `entries` of the longest entry matching tokens[i..], or -1.
  // `length` receives the matched token count.
  static long match_entry(const std::vector<std::vector<std::string>>& entries,
                          const std::vector<std::string>& lowercase_tokens, size_t i,
                          size_t& length);

  const std::vector<std::vector<std::string>>& place_tokens() const { return places_; }
  const std::vector<std::vector<std::string>>& name_tokens() const { return names_; }

 private:
  std::vector<std::vector<std::string>> places_;
  std::vector<std::vector<std::string>> names_;
};

AnswerCategory categorize(const AnswerSpan& gold, const TokenizedText& context,
                          const AnswerCategorizer& categorizer);

}  // namespace qattack
