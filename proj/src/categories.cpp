#include "qattack/categories.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>
#include <unordered_set>

#include "qattack/error.hpp"
#include "qattack/reference_models.hpp"

namespace qattack {

namespace {

using WordSet = std::unordered_set<std::string_view>;

const WordSet kMonths = {"january", "february", "march",     "april",   "may",
                         "june",    "july",     "august",    "september", "october",
                         "november", "december", "jan",      "feb",     "mar",
                         "apr",     "jun",      "jul",       "aug",     "sep",
                         "sept",    "oct",      "nov",       "dec"};
const WordSet kWeekdays = {"monday", "tuesday", "wednesday", "thursday",
                           "friday", "saturday", "sunday"};
const WordSet kNumberWords = {
    "zero",     "one",     "two",      "three",   "four",     "five",     "six",
    "seven",    "eight",   "nine",     "ten",     "eleven",   "twelve",   "thirteen",
    "fourteen", "fifteen", "sixteen",  "seventeen", "eighteen", "nineteen", "twenty",
    "thirty",   "forty",   "fifty",    "sixty",   "seventy",  "eighty",   "ninety",
    "hundred",  "thousand", "million", "billion", "trillion", "dozen",    "half",
    "first",    "second",  "third",    "fourth",  "fifth",    "tenth"};
const WordSet kHonorifics = {"mr",     "mrs",    "ms",      "dr",       "sir",      "king",
                             "queen",  "president", "lord", "lady",     "saint",    "st",
                             "pope",   "prince", "princess", "general", "captain",  "emperor",
                             "empress", "duke",  "bishop",  "professor"};
const WordSet kFiniteVerbs = {"is",    "are",   "was",    "were",  "has",   "have", "had",
                              "does",  "did",   "do",     "can",   "could", "will", "would",
                              "should", "may",  "might",  "must",  "became", "made", "took",
                              "gave",  "began", "led",    "won",   "lost",  "built", "said"};
const WordSet kBaseVerbs = {"make",    "take",   "give",    "use",     "provide", "build",
                            "create",  "allow",  "prevent", "reduce",  "increase", "protect",
                            "improve", "support", "control", "produce", "study",   "keep",
                            "find",    "help",   "become",  "develop", "form",    "carry"};
const WordSet kAdjectives = {"good",   "bad",    "large",   "small",  "high",   "low",
                             "new",    "old",    "young",   "long",   "short",  "great",
                             "early",  "late",   "major",   "minor",  "popular", "common",
                             "rare",   "public", "private", "strong", "weak",   "important",
                             "simple", "complex", "rich",   "poor",   "hot",    "cold",
                             "warm",   "dark",   "bright",  "free",   "full",   "empty",
                             "modern", "ancient", "royal",  "urban",  "rural",  "political",
                             "social", "natural", "local",  "global", "national", "official",
                             "successful", "difficult", "easy", "wide", "narrow", "red",
                             "blue",   "green",  "white",   "black",  "religious", "economic"};

bool has_alpha(const std::string& t) {
  return std::any_of(t.begin(), t.end(), [](char c) { return std::isalpha(static_cast<unsigned char>(c)); });
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

bool is_capitalized(const std::string& t) {
  return !t.empty() && std::isupper(static_cast<unsigned char>(t.front()));
}

bool is_slash_date(const std::string& raw) {
  // d/m/y with 1-2, 1-2, 2-4 digits
  int groups = 0, digits = 0;
  std::vector<int> lens;
  for (char c : raw) {
    if (std::isdigit(static_cast<unsigned char>(c))) {
      ++digits;
    } else if (c == '/') {
      lens.push_back(digits);
      digits = 0;
      ++groups;
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      return false;
    }
  }
  lens.push_back(digits);
  return groups == 2 && lens[0] >= 1 && lens[0] <= 2 && lens[1] >= 1 && lens[1] <= 2 &&
         lens[2] >= 2 && lens[2] <= 4;
}

bool is_decade(const std::string& t) {
  return t.size() == 5 && t.back() == 's' &&
         std::all_of(t.begin(), t.end() - 1, [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

// -ing/-ed words that are rarely verbs in answer spans.
const WordSet kNotVerbs = {"during", "morning", "evening", "spring", "thing",   "king",
                           "building", "ceiling", "wedding", "string", "nothing", "something",
                           "anything", "everything", "ring", "wing", "red", "bed", "seed",
                           "speed", "hundred", "need", "feed", "shed", "bred"};
const WordSet kSeasons = {"spring", "summer", "autumn", "fall", "winter"};

bool is_verb_form(const std::string& low) {
  if (kNotVerbs.count(low)) return false;
  return (ends_with(low, "ing") && low.size() > 4) || (ends_with(low, "ed") && low.size() > 3);
}

bool is_adjective(const std::string& low) {
  if (kAdjectives.count(low)) return true;
  for (std::string_view suf : {"ous", "ful", "ive", "able", "ible", "less"}) {
    if (ends_with(low, suf) && low.size() > suf.size() + 2) return true;
  }
  return false;
}

std::vector<std::vector<std::string>> tokenize_entries(const std::vector<std::string>& entries) {
  std::vector<std::vector<std::string>> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    std::vector<std::string> toks;
    for (const auto& t : tokenize(e).tokens) {
      if (!is_punctuation_token(t)) toks.push_back(lowercase(t));
    }
    if (!toks.empty()) out.push_back(std::move(toks));
  }
  return out;
}

}  // namespace

std::string to_string(AnswerCategory c) {
  switch (c) {
    case AnswerCategory::kNames: return "Names";
    case AnswerCategory::kNumbers: return "Numbers";
    case AnswerCategory::kPlaces: return "Places";
    case AnswerCategory::kDates: return "Dates";
    case AnswerCategory::kOtherEnts: return "OtherEnts";
    case AnswerCategory::kNounPhrases: return "NounPhrases";
    case AnswerCategory::kVerbPhrases: return "VerbPhrases";
    case AnswerCategory::kAdjPhrases: return "AdjPhrases";
    case AnswerCategory::kClauses: return "Clauses";
    case AnswerCategory::kOthers: return "Others";
  }
  return "Others";
}

AnswerCategory parse_category(std::string_view name) {
  for (auto c : kAllCategories) {
    if (to_string(c) == name) return c;
  }
  throw Error(ErrorKind::kParse, "unknown answer category '" + std::string(name) + "'");
}

std::vector<std::string> load_entry_list(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
    size_t b = 0;
    while (b < line.size() && std::isspace(static_cast<unsigned char>(line[b]))) ++b;
    if (b < line.size() && line[b] != '#') out.push_back(line.substr(b));
  }
  if (out.empty()) throw Error(ErrorKind::kValidation, path.string() + " has no entries");
  return out;
}

bool is_month_name(std::string_view t) { return kMonths.count(t) > 0; }
bool is_number_word(std::string_view t) { return kNumberWords.count(t) > 0; }

bool is_numeric_token(std::string_view t) {
  bool digit = false;
  for (char c : t) {
    if (std::isdigit(static_cast<unsigned char>(c))) {
      digit = true;
    } else if (c != ',' && c != '.' && c != '%') {
      return false;
    }
  }
  return digit;
}

AnswerCategorizer::AnswerCategorizer(const Gazetteers& g)
    : places_(tokenize_entries(g.places)), names_(tokenize_entries(g.person_names)) {}

long AnswerCategorizer::match_entry(const std::vector<std::vector<std::string>>& entries,
                                    const std::vector<std::string>& toks, size_t i,
                                    size_t& length) {
  long best = -1;
  length = 0;
  for (size_t e = 0; e < entries.size(); ++e) {
    const auto& entry = entries[e];
    if (entry.size() <= length || i + entry.size() > toks.size()) continue;
    if (std::equal(entry.begin(), entry.end(), toks.begin() + static_cast<long>(i))) {
      best = static_cast<long>(e);
      length = entry.size();
    }
  }
  return best;
}

AnswerCategory AnswerCategorizer::operator()(const AnswerSpan& gold,
                                             const TokenizedText& context) const {
  const TokenizedText answer = tokenize(gold.text);
  std::vector<std::string> words, lows;
  for (const auto& t : answer.tokens) {
    if (is_punctuation_token(t)) continue;
    words.push_back(t);
    lows.push_back(lowercase(t));
  }
  if (words.empty()) return AnswerCategory::kOthers;

  if (is_slash_date(gold.text)) return AnswerCategory::kDates;
  for (const auto& l : lows) {
    if (kMonths.count(l) && l != "may" && l != "march") return AnswerCategory::kDates;
    if (kWeekdays.count(l) || is_decade(l) || l == "century" || l == "centuries" ||
        (kSeasons.count(l) && l != "fall")) {
      return AnswerCategory::kDates;
    }
  }
  // "May" and "March" only count as months when capitalized and next to a number.
  for (size_t i = 0; i < words.size(); ++i) {
    if ((lows[i] == "may" || lows[i] == "march") && is_capitalized(words[i])) {
      const bool near_number = (i > 0 && is_numeric_token(words[i - 1])) ||
                               (i + 1 < words.size() && is_numeric_token(words[i + 1]));
      if (near_number) return AnswerCategory::kDates;
    }
  }

  const size_t n = words.size();
  if (n <= 4) {
    for (size_t i = 0; i < n; ++i) {
      if (is_numeric_token(words[i]) || kNumberWords.count(lows[i])) return AnswerCategory::kNumbers;
    }
    for (size_t i = 0; i < n; ++i) {
      size_t len = 0;
      if (match_entry(places_, lows, i, len) >= 0) return AnswerCategory::kPlaces;
    }
    for (size_t i = 0; i < n; ++i) {
      size_t len = 0;
      if (kHonorifics.count(lows[i]) && is_capitalized(words[i])) return AnswerCategory::kNames;
      if (is_capitalized(words[i]) && match_entry(names_, lows, i, len) >= 0) {
        return AnswerCategory::kNames;
      }
    }
  }

  // A capital letter at the start of a sentence says nothing about entities.
  bool sentence_initial = gold.char_start == 0;
  if (!sentence_initial && gold.char_start <= context.raw.size()) {
    size_t p = gold.char_start;
    while (p > 0 && std::isspace(static_cast<unsigned char>(context.raw[p - 1]))) --p;
    sentence_initial = p == 0 || context.raw[p - 1] == '.' || context.raw[p - 1] == '!' ||
                       context.raw[p - 1] == '?';
  }
  if (n >= 2) {
    size_t content = 0;
    bool all_caps = true;
    for (size_t i = 0; i < n; ++i) {
      if (!has_alpha(words[i]) || is_stopword(lows[i])) continue;
      if (i == 0 && sentence_initial) continue;
      ++content;
      if (!is_capitalized(words[i])) all_caps = false;
    }
    if (content > 0 && all_caps) return AnswerCategory::kOtherEnts;
  }

  if (n >= 6) {
    for (size_t i = 1; i < n; ++i) {
      if (kFiniteVerbs.count(lows[i]) || (ends_with(lows[i], "ed") && lows[i].size() > 3)) {
        return AnswerCategory::kClauses;
      }
    }
  }
  if (is_verb_form(lows[0]) || lows[0] == "to" || kBaseVerbs.count(lows[0])) {
    return AnswerCategory::kVerbPhrases;
  }
  if (n <= 2 && is_adjective(lows.back())) return AnswerCategory::kAdjPhrases;
  const bool alphabetic = std::any_of(words.begin(), words.end(), has_alpha);
  if (alphabetic && n <= 5) return AnswerCategory::kNounPhrases;
  return AnswerCategory::kOthers;
}

AnswerCategory categorize(const AnswerSpan& gold, const TokenizedText& context,
                          const AnswerCategorizer& categorizer) {
  return categorizer(gold, context);
}

}  // namespace qattack
