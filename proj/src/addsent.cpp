#include "qattack/addsent.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>
#include <span>
#include <unordered_set>

#include "qattack/error.hpp"
#include "qattack/metrics.hpp"
#include "qattack/reference_models.hpp"

namespace qattack {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, '\t')) {
    while (!field.empty() && std::isspace(static_cast<unsigned char>(field.back()))) field.pop_back();
    size_t b = 0;
    while (b < field.size() && std::isspace(static_cast<unsigned char>(field[b]))) ++b;
    out.push_back(field.substr(b));
  }
  return out;
}

bool all_digits(const std::string& t) {
  return !t.empty() && std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

std::string match_case(const std::string& replacement, const std::string& original) {
  std::string out = replacement;
  if (!original.empty() && !out.empty() && std::isupper(static_cast<unsigned char>(original[0]))) {
    out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  }
  return out;
}

EntityTable::Entries index_entries(const std::vector<std::string>& display) {
  EntityTable::Entries e;
  for (const auto& d : display) {
    std::vector<std::string> toks;
    for (const auto& t : tokenize(d).tokens) {
      if (!is_punctuation_token(t)) toks.push_back(lowercase(t));
    }
    if (toks.empty()) continue;
    e.display.push_back(d);
    e.tokens.push_back(std::move(toks));
  }
  return e;
}

// A different entry of the same list, or nullopt when the list has only one.
std::optional<size_t> other_entry(const EntityTable::Entries& entries, size_t current, Rng& rng) {
  if (entries.display.size() < 2) return std::nullopt;
  size_t pick = uniform_index(rng, entries.display.size() - 1);
  if (pick >= current) ++pick;
  return pick;
}

const std::unordered_set<std::string> kBe = {"is", "are", "was", "were"};
const std::unordered_set<std::string> kDo = {"did", "does", "do"};
const std::unordered_set<std::string> kOtherAux = {"has", "have", "had",   "can",
                                                   "could", "will", "would", "should"};
const std::unordered_set<std::string> kParticiples = {
    "built", "made", "born", "held", "known", "found", "sold",  "won",   "written",
    "called", "located", "founded", "buried", "given", "taken", "seen", "chosen", "done"};

const std::unordered_set<std::string> kLeadingPrepositions = {
    "in", "on", "at", "from", "near", "since", "until", "during", "for", "by", "with", "to", "above"};

bool is_aux(const std::string& low) {
  return kBe.count(low) || kDo.count(low) || kOtherAux.count(low);
}

bool is_participle(const std::string& low) {
  if (kParticiples.count(low)) return true;
  auto ends = [&](std::string_view s) {
    return low.size() > s.size() + 1 && low.compare(low.size() - s.size(), s.size(), s) == 0;
  };
  return ends("ed") || ends("en");
}

using Pieces = std::vector<std::string>;

Pieces slice(const Pieces& v, size_t from, size_t to = std::string::npos) {
  to = std::min(to, v.size());
  if (from >= to) return {};
  return Pieces(v.begin() + static_cast<long>(from), v.begin() + static_cast<long>(to));
}

Pieces concat(std::initializer_list<Pieces> parts) {
  Pieces out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

// "<body> <aux> <tail>", with the auxiliary moved in front of the first
// participle after the subject: "the treaty signed at X" + "was" ->
// "the treaty was signed at X".
Pieces be_clause(const Pieces& body, const std::string& aux, const Pieces& tail) {
  for (size_t i = 1; i < body.size(); ++i) {
    if (is_participle(lowercase(body[i]))) {
      return concat({slice(body, 0, i), {aux}, slice(body, i), tail});
    }
  }
  return concat({body, {aux}, tail});
}

// Whether the word after the wh-word opens a noun phrase: always after
// "which", possibly after "what", never after "who".
enum class NounLead { kNone, kMaybe, kAlways };

std::optional<Pieces> subject_question(const Pieces& rest, const std::string& fake, NounLead noun) {
  if (rest.empty()) return std::nullopt;
  const std::string r0 = lowercase(rest[0]);
  if (kBe.count(r0)) {
    if (rest.size() < 2) return std::nullopt;
    if (is_participle(lowercase(rest[1]))) return concat({{fake}, rest});
    return be_clause(slice(rest, 1), rest[0], {fake});
  }
  if (kDo.count(r0)) {
    if (rest.size() < 2) return std::nullopt;
    return concat({slice(rest, 1), {fake}});
  }
  if (noun != NounLead::kNone) {
    for (size_t a = 1; a < rest.size() && a <= 3; ++a) {
      const std::string aux = lowercase(rest[a]);
      if (!is_aux(aux)) continue;
      // "which river is longest": the noun phrase is the subject.
      const Pieces rem = slice(rest, a + 1);
      const bool passive = std::any_of(rem.begin(), rem.end(),
                                       [](const std::string& t) { return is_participle(lowercase(t)); });
      if (noun == NounLead::kAlways && kBe.count(aux) && !passive) {
        return concat({{"the"}, slice(rest, 0, a), {fake}, slice(rest, a)});
      }
      // "what year did ...": skip the noun phrase.
      return subject_question(slice(rest, a), fake, NounLead::kNone);
    }
    // "which team won the cup"
    if (noun == NounLead::kAlways && rest.size() >= 2) {
      return concat({{"the", rest[0], fake}, slice(rest, 1)});
    }
  }
  return concat({{fake}, rest});
}

std::optional<Pieces> adverbial_question(const Pieces& rest, const std::string& prep,
                                         const std::string& fake) {
  if (rest.empty()) return std::nullopt;
  const std::string r0 = lowercase(rest[0]);
  const Pieces tail = prep.empty() ? Pieces{fake} : Pieces{prep, fake};
  if (kBe.count(r0)) {
    if (rest.size() < 2) return std::nullopt;
    return be_clause(slice(rest, 1), rest[0], tail);
  }
  if (kDo.count(r0)) {
    if (rest.size() < 2) return std::nullopt;
    return concat({slice(rest, 1), tail});
  }
  if (kOtherAux.count(r0)) {
    if (rest.size() < 3) return std::nullopt;
    return concat({{rest[1], rest[0]}, slice(rest, 2), tail});
  }
  return concat({rest, tail});
}

std::optional<Pieces> how_question(const Pieces& rest, const std::string& fake) {
  if (rest.empty()) return std::nullopt;
  const std::string r0 = lowercase(rest[0]);
  if (r0 == "many" || r0 == "much") {
    size_t a = 1;
    while (a < rest.size() && !is_aux(lowercase(rest[a]))) ++a;
    if (a >= rest.size()) return concat({{fake}, slice(rest, 1)});
    const Pieces np = slice(rest, 1, a);
    const Pieces rem = slice(rest, a + 1);
    if (kBe.count(lowercase(rest[a]))) return concat({{fake}, np, {rest[a]}, rem});
    if (rem.empty()) return std::nullopt;
    return concat({rem, {fake}, np});
  }
  if (is_aux(r0)) {
    if (rest.size() < 2) return std::nullopt;
    if (kBe.count(r0)) return be_clause(slice(rest, 1), rest[0], {"by", fake});
    return concat({slice(rest, 1), {"by", fake}});
  }
  if (rest.size() >= 3 && kBe.count(lowercase(rest[1]))) {
    return concat({slice(rest, 2), {rest[1], fake}});
  }
  return std::nullopt;
}

std::unordered_set<std::string> content_tokens(const std::string& text) {
  std::unordered_set<std::string> out;
  std::istringstream in(normalize_answer(text));
  std::string w;
  while (in >> w) {
    if (!is_stopword(w)) out.insert(w);
  }
  return out;
}

}  // namespace

AntonymLexicon parse_lexicon(std::string_view text) {
  AntonymLexicon lex;
  std::vector<std::pair<std::string, std::string>> pairs;
  std::istringstream in{std::string(text)};
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto f = split_tabs(line);
    if (f.size() != 2 || f[0].empty() || f[1].empty()) {
      throw Error(ErrorKind::kParse, "lexicon line " + std::to_string(lineno) + ": expected two tab-separated fields");
    }
    const std::string a = lowercase(f[0]), b = lowercase(f[1]);
    if (a == b) {
      throw Error(ErrorKind::kParse, "lexicon line " + std::to_string(lineno) + ": maps '" + a + "' to itself");
    }
    lex.entries[a] = b;
    pairs.emplace_back(a, b);
  }
  for (const auto& [a, b] : pairs) lex.entries.emplace(b, a);
  if (lex.entries.empty()) throw Error(ErrorKind::kValidation, "antonym lexicon is empty");
  return lex;
}

AntonymLexicon load_lexicon(const std::filesystem::path& path) {
  return parse_lexicon(read_file(path));
}

void FakeAnswerTable::validate() const {
  for (auto c : kAllCategories) {
    auto it = rows.find(c);
    if (it == rows.end() || it->second.empty()) {
      throw Error(ErrorKind::kValidation, "fake answer table has no row for " + to_string(c));
    }
  }
}

FakeAnswerTable parse_fake_answers(std::string_view text) {
  FakeAnswerTable table;
  std::istringstream in{std::string(text)};
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto f = split_tabs(line);
    if (f.size() != 2 || f[1].empty()) {
      throw Error(ErrorKind::kParse, "fake answer line " + std::to_string(lineno) + ": expected category<TAB>answer");
    }
    table.rows[parse_category(f[0])].push_back(f[1]);
  }
  table.validate();
  return table;
}

FakeAnswerTable load_fake_answers(const std::filesystem::path& path) {
  return parse_fake_answers(read_file(path));
}

EntityTable::EntityTable(const Gazetteers& g)
    : places_(index_entries(g.places)), names_(index_entries(g.person_names)) {}

std::string perturb_digits(const std::string& digits, Rng& rng) {
  std::string out = digits;
  // Numbers of three or more digits keep their leading digit, so a year
  // stays plausible.
  const size_t pos = out.size() >= 3 ? 1 + uniform_index(rng, out.size() - 1)
                                     : uniform_index(rng, out.size());
  std::vector<char> allowed;
  for (char d = '0'; d <= '9'; ++d) {
    if (d == out[pos] || (d == '0' && pos == 0 && out.size() > 1)) continue;
    allowed.push_back(d);
  }
  out[pos] = allowed[uniform_index(rng, allowed.size())];
  return out;
}

std::optional<TokenizedText> mutate_query(const TokenizedText& question,
                                          const AntonymLexicon& lexicon,
                                          const EntityTable& entities, Rng& rng) {
  std::vector<std::string> lows;
  lows.reserve(question.size());
  for (const auto& t : question.tokens) lows.push_back(lowercase(t));

  size_t wh_pos = 0;
  while (wh_pos + 1 < lows.size() && !is_wh_word(lows[wh_pos])) ++wh_pos;
  if (!is_wh_word(lows.empty() ? std::string() : lows[wh_pos])) wh_pos = 0;

  std::vector<std::string> out;
  size_t changes = 0;
  for (size_t i = 0; i < question.size();) {
    bool replaced = false;
    for (const auto* list : {&entities.places(), &entities.names()}) {
      size_t len = 0;
      const long hit = AnswerCategorizer::match_entry(list->tokens, lows, i, len);
      if (hit < 0) continue;
      if (auto other = other_entry(*list, static_cast<size_t>(hit), rng)) {
        for (auto& t : tokenize(list->display[*other]).tokens) out.push_back(std::move(t));
        i += len;
        ++changes;
        replaced = true;
      }
      break;
    }
    if (replaced) continue;
    const std::string& tok = question.tokens[i];
    // Only content words after the question word change; "how many" and
    // "near which" keep their meaning.
    const bool fixed = i <= wh_pos || (i == wh_pos + 1 && lows[wh_pos] == "how") ||
                       is_stopword(lows[i]);
    if (auto it = lexicon.entries.find(lows[i]); !fixed && it != lexicon.entries.end()) {
      out.push_back(match_case(it->second, tok));
      ++changes;
    } else if (all_digits(tok)) {
      out.push_back(perturb_digits(tok, rng));
      ++changes;
    } else {
      out.push_back(tok);
    }
    ++i;
  }
  if (changes == 0) return std::nullopt;
  return join_tokens(out);
}

bool shares_content_token(const std::string& text, std::span<const std::string> golds) {
  const auto mine = content_tokens(text);
  for (const auto& g : golds) {
    for (const auto& t : content_tokens(g)) {
      if (mine.count(t)) return true;
    }
  }
  return false;
}

std::string fake_answer(const AnswerSpan& gold, const TokenizedText& context,
                        std::span<const std::string> all_golds, const FakeAnswerTable& table,
                        const AnswerCategorizer& categorizer, Rng& rng) {
  auto usable = [&](const std::string& cand) {
    return !exact_match(cand, all_golds) && !shares_content_token(cand, all_golds);
  };
  const AnswerCategory category = categorizer(gold, context);
  std::vector<const std::string*> pool;
  if (auto it = table.rows.find(category); it != table.rows.end()) {
    for (const auto& c : it->second) {
      if (usable(c)) pool.push_back(&c);
    }
  }
  if (pool.empty()) {
    for (auto c : kAllCategories) {
      auto it = table.rows.find(c);
      if (it == table.rows.end()) continue;
      for (const auto& cand : it->second) {
        if (usable(cand)) pool.push_back(&cand);
      }
    }
  }
  if (pool.empty()) throw Error(ErrorKind::kRuntime, "no fake answer differs from the gold answers");
  return *pool[uniform_index(rng, pool.size())];
}

std::string detokenize(std::span<const std::string> tokens) {
  static const std::unordered_set<std::string> no_space_before = {",", ".", ";", ":", "!",
                                                                  "?", ")", "%", "'", "-"};
  static const std::unordered_set<std::string> no_space_after = {"(", "$", "-"};
  std::string out;
  bool glue_next = false;
  for (size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    if (!out.empty() && !glue_next && !no_space_before.count(t)) out.push_back(' ');
    out += t;
    glue_next = no_space_after.count(t) > 0;
    if (t == "'" && i + 1 < tokens.size()) {
      static const std::unordered_set<std::string> clitics = {"s", "t", "re", "ll", "d", "ve", "m"};
      glue_next = clitics.count(lowercase(tokens[i + 1])) > 0;
    }
  }
  return out;
}

std::string to_declarative(const TokenizedText& mutated_query, const std::string& fake) {
  Pieces toks = mutated_query.tokens;
  while (!toks.empty() && (toks.back() == "?" || toks.back() == ".")) toks.pop_back();
  if (toks.empty()) return fake + ".";

  std::string wh = lowercase(toks.front());
  Pieces rest = slice(toks, 1);
  std::optional<Pieces> body;
  if (kLeadingPrepositions.count(wh) && !rest.empty() && is_wh_word(lowercase(rest[0]))) {
    // "In what year was X built" -> "X was built in FAKE".
    const std::string prep = wh;
    size_t a = 1;
    while (a < rest.size() && a <= 3 && !is_aux(lowercase(rest[a]))) ++a;
    if (a < rest.size() && is_aux(lowercase(rest[a]))) {
      body = adverbial_question(slice(rest, a), prep, fake);
    }
    wh.clear();
  }
  if (wh == "who" || wh == "what" || wh == "which") {
    const NounLead noun = wh == "which" ? NounLead::kAlways
                          : wh == "what" ? NounLead::kMaybe
                                         : NounLead::kNone;
    body = subject_question(rest, fake, noun);
  } else if (wh == "where" || wh == "when") {
    body = adverbial_question(rest, "in", fake);
  } else if (wh == "why") {
    body = adverbial_question(rest, "because of", fake);
  } else if (wh == "how") {
    body = how_question(rest, fake);
  }
  std::string sentence = body ? detokenize(*body) : detokenize(toks) + " is " + fake;
  if (!sentence.empty()) {
    sentence[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(sentence[0])));
  }
  return sentence + ".";
}

AddSentGenerator::AddSentGenerator(const AddSentResources& resources)
    : resources_(resources), entities_(resources.gazetteers), categorizer_(resources.gazetteers) {
  resources_.fake_answers.validate();
}

std::vector<AddSentCandidate> AddSentGenerator::gen_candidates(const QAExample& example, Rng& rng,
                                                               size_t n) const {
  std::vector<AddSentCandidate> out;
  if (n == 0 || example.gold_answers.empty()) return out;
  const auto golds = example.gold_texts();
  std::unordered_set<std::string> seen;
  for (size_t attempt = 0; attempt < 4 * n && out.size() < n; ++attempt) {
    auto mutated = mutate_query(example.question, resources_.lexicon, entities_, rng);
    if (!mutated) return out;
    const std::string raw_fake = fake_answer(example.gold_answers.front(), example.context, golds,
                                         resources_.fake_answers, categorizer_, rng);
    std::string fake = raw_fake;
    std::string sentence = to_declarative(*mutated, fake);
    if (sentence.find(fake) == std::string::npos && !fake.empty()) {
      // Sentence-initial capitalization; record the answer as it reads.
      fake[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(fake[0])));
    }
    if (sentence.find(fake) == std::string::npos) continue;
    if (shares_content_token(sentence, golds)) continue;
    if (!seen.insert(sentence).second) continue;
    out.push_back({tokenize(sentence), std::move(*mutated), fake});
  }
  return out;
}

namespace {

TransferRecord base_record(const QAExample& example, Method method, const SpanModel& victim) {
  TransferRecord r;
  r.example_id = example.id;
  r.method = method;
  const auto golds = example.gold_texts();
  const auto before = predict(victim, example.question, example.context, 1);
  r.f1_before = token_f1(before.top().text, golds);
  return r;
}

}  // namespace

TransferRecord evaluate_candidate(const AddSentCandidate* candidate, const SpanModel& victim,
                                  const QAExample& example, Placement placement, Method method) {
  TransferRecord r = base_record(example, method, victim);
  const auto golds = example.gold_texts();
  if (!candidate) {
    r.attack_failed = true;
    r.f1_after = r.f1_before;
    r.em_after = exact_match(predict(victim, example.question, example.context, 1).top().text, golds);
    return r;
  }
  const Perturbation p = apply_perturbation(example.context, candidate->sentence, placement);
  if (!answers_preserved(example, p)) {
    throw Error(ErrorKind::kRuntime, example.id + ": perturbation moved the gold answer");
  }
  const auto after = predict(victim, example.question, p.context, 1);
  const auto m = score(after.top().text, golds);
  r.f1_after = m.f1;
  r.em_after = m.em;
  r.adversary = candidate->sentence.raw;
  return r;
}

Selection select_best(std::span<const AddSentCandidate> candidates, const SpanModel& victim,
                      const QAExample& example, Placement placement) {
  if (candidates.empty()) {
    return {evaluate_candidate(nullptr, victim, example, placement, Method::kAddSent), std::nullopt};
  }
  TransferRecord r = base_record(example, Method::kAddSent, victim);
  const auto golds = example.gold_texts();
  std::vector<Perturbation> perturbed;
  perturbed.reserve(candidates.size());
  for (const auto& c : candidates) {
    perturbed.push_back(apply_perturbation(example.context, c.sentence, placement));
    if (!answers_preserved(example, perturbed.back())) {
      throw Error(ErrorKind::kRuntime, example.id + ": perturbation moved the gold answer");
    }
  }
  std::vector<PredictItem> items;
  for (const auto& p : perturbed) items.push_back({&example.question, &p.context});
  const auto dists = predict_batch(victim, items, 1);
  size_t best = 0;
  MetricResult best_m = score(dists[0].top().text, golds);
  for (size_t i = 1; i < dists.size(); ++i) {
    const auto m = score(dists[i].top().text, golds);
    if (m.f1 < best_m.f1) {
      best = i;
      best_m = m;
    }
  }
  r.f1_after = best_m.f1;
  r.em_after = best_m.em;
  r.adversary = candidates[best].sentence.raw;
  return {r, best};
}

std::optional<size_t> select_one(std::span<const AddSentCandidate> candidates, Rng& rng) {
  if (candidates.empty()) return std::nullopt;
  return uniform_index(rng, candidates.size());
}

}  // namespace qattack
