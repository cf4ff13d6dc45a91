#include <set>

#include "doctest.h"
#include "qattack/addsent.hpp"
#include "qattack/error.hpp"
#include "qattack/metrics.hpp"
#include "qattack/reference_models.hpp"

using namespace qattack;

namespace {

const char* kFakes =
    "Names\tJeff Dean\nNames\tAnna Berg\n"
    "Numbers\t42\nNumbers\t17\n"
    "Places\tChicago\nPlaces\tOslo\n"
    "Dates\tMay 3 , 1850\n"
    "OtherEnts\tBlue Lantern Society\n"
    "NounPhrases\tcopper kettle\nNounPhrases\tpaper lantern\n"
    "VerbPhrases\tpainting fences\n"
    "AdjPhrases\tvery quiet\n"
    "Clauses\tthe council voted against it\n"
    "Others\tnone of these\n";

AddSentResources resources() {
  AddSentResources r;
  r.lexicon = parse_lexicon("popular\tunpopular\nold\tnew\nlarge\tsmall\n");
  r.gazetteers.places = {"Chicago", "Oslo", "Paris", "New York"};
  r.gazetteers.person_names = {"Marie Curie", "Jeff Dean", "Isaac Newton"};
  r.fake_answers = parse_fake_answers(kFakes);
  return r;
}

QAExample example(const std::string& question, const std::string& context,
                  const std::string& answer) {
  QAExample ex;
  ex.id = "x";
  ex.question = tokenize(question);
  ex.context = tokenize(context);
  ex.gold_answers = {{answer, ex.context.raw.find(answer)}};
  return ex;
}

}  // namespace

TEST_SUITE("addsent") {

TEST_CASE("declarative templates") {
  CHECK(to_declarative(tokenize("Who released the unpopular game ?"), "Jeff Dean") ==
        "Jeff Dean released the unpopular game.");
  CHECK(to_declarative(tokenize("Where is the old stadium ?"), "Chicago") ==
        "The old stadium is in Chicago.");
  // Do-support is dropped without re-inflecting the verb.
  CHECK(to_declarative(tokenize("When did the war end ?"), "May 3, 1850") ==
        "The war end in May 3, 1850.");
  CHECK(to_declarative(tokenize("Which river is longest ?"), "Oslo") ==
        "The river Oslo is longest.");
  // No question word: fallback template.
  CHECK(to_declarative(tokenize("Name the capital ?"), "Oslo") == "Name the capital is Oslo.");
  for (const char* q : {"Why did the bridge fall ?", "How many lakes are there ?",
                        "What is the capital of Peru ?", "Which river is longest ?"}) {
    const auto s = to_declarative(tokenize(q), "copper kettle");
    CAPTURE(q);
    CHECK(s.back() == '.');
    CHECK(lowercase(s).find("copper kettle") != std::string::npos);
    CHECK(s.find('?') == std::string::npos);
  }
}

TEST_CASE("lexicon") {
  const auto lex = parse_lexicon("hot\tcold\nup\tdown\ndown\tlow\n");
  CHECK(lex.entries.at("hot") == "cold");
  CHECK(lex.entries.at("cold") == "hot");
  CHECK(lex.entries.at("down") == "low");  // explicit entry beats the reverse of up/down
  CHECK(lex.entries.at("up") == "down");
  for (const auto& [k, v] : lex.entries) CHECK(k != v);
}

TEST_CASE("fake answer table requires every category") {
  CHECK_NOTHROW(parse_fake_answers(kFakes).validate());
  CHECK_THROWS_AS(parse_fake_answers("Names\tJeff Dean\n").validate(), Error);
}

TEST_CASE("query mutation") {
  const auto r = resources();
  const EntityTable entities(r.gazetteers);
  Rng rng(1);
  const auto m = mutate_query(tokenize("Who released the popular game ?"), r.lexicon, entities, rng);
  REQUIRE(m);
  CHECK(m->raw == "Who released the unpopular game ?");

  CHECK_FALSE(mutate_query(tokenize("Who sang that song ?"), r.lexicon, entities, rng));

  for (int i = 0; i < 20; ++i) {
    const auto y = mutate_query(tokenize("What happened in 1993 ?"), r.lexicon, entities, rng);
    REQUIRE(y);
    const auto& year = y->tokens[3];
    CHECK(year != "1993");
    CHECK(year.size() == 4);
    CHECK(year[0] == '1');
  }

  const auto place = mutate_query(tokenize("Who founded Paris ?"), r.lexicon, entities, rng);
  REQUIRE(place);
  CHECK(place->tokens[2] != "Paris");
}

TEST_CASE("digit perturbation") {
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const auto d = perturb_digits("7", rng);
    CHECK(d != "7");
    CHECK(d.size() == 1);
    const auto e = perturb_digits("50", rng);
    CHECK(e != "50");
    CHECK(e[0] != '0');
  }
}

TEST_CASE("fake answers keep the category and avoid the gold") {
  const auto r = resources();
  const AnswerCategorizer cat(r.gazetteers);
  Rng rng(2);
  const auto ctx = tokenize("The fair opened in Chicago in 1993 .");
  for (int i = 0; i < 30; ++i) {
    const std::vector<std::string> golds = {"Chicago"};
    const auto f = fake_answer({"Chicago", ctx.raw.find("Chicago")}, ctx, golds, r.fake_answers,
                               cat, rng);
    CHECK(f == "Oslo");
    const std::vector<std::string> years = {"1993"};
    const auto n = fake_answer({"1993", ctx.raw.find("1993")}, ctx, years, r.fake_answers, cat, rng);
    CHECK((n == "42" || n == "17"));
  }
}

TEST_CASE("candidates contain the fake answer and no gold content token") {
  const auto r = resources();
  const AddSentGenerator gen(r);
  const auto ex = example("Who released the popular game ?",
                          "The popular game was released by Marie Curie in 1993 .", "Marie Curie");
  Rng rng(3);
  const auto cands = gen.gen_candidates(ex, rng, 5);
  REQUIRE_FALSE(cands.empty());
  CHECK(cands.size() <= 5);
  for (const auto& c : cands) {
    CHECK(c.sentence.raw.find(c.fake_answer) != std::string::npos);
    CHECK_FALSE(shares_content_token(c.sentence.raw, ex.gold_texts()));
  }

  const auto stuck = example("Who sang that song ?", "That song was sung by Jeff Dean .", "Jeff Dean");
  CHECK(gen.gen_candidates(stuck, rng, 5).empty());
}

TEST_CASE("selection") {
  const auto r = resources();
  const AddSentGenerator gen(r);
  const auto ex = example("Who released the popular game ?",
                          "The popular game was released by Marie Curie in 1993 .", "Marie Curie");
  Rng rng(3);
  const auto cands = gen.gen_candidates(ex, rng, 5);
  REQUIRE_FALSE(cands.empty());
  const OverlapModel victim;
  const auto sel = select_best(cands, victim, ex, Placement::kSuffix);
  REQUIRE(sel.chosen);
  double mean = 0;
  for (const auto& c : cands) {
    const auto rec = evaluate_candidate(&c, victim, ex, Placement::kSuffix, Method::kAddSent);
    CHECK(sel.record.f1_after <= rec.f1_after);
    mean += rec.f1_after;
  }
  CHECK(sel.record.f1_after <= mean / static_cast<double>(cands.size()));

  const std::vector<AddSentCandidate> single = {cands.front()};
  CHECK(select_best(single, victim, ex, Placement::kSuffix).chosen == 0u);
  CHECK(select_one(single, rng) == 0u);

  const auto none = select_best({}, victim, ex, Placement::kSuffix);
  CHECK_FALSE(none.chosen);
  CHECK(none.record.attack_failed);
  CHECK(none.record.f1_after == none.record.f1_before);
  CHECK_FALSE(select_one({}, rng));
}

TEST_CASE("detokenize") {
  const std::vector<std::string> t = {"Oslo", ",", "in", "(", "1850", ")", "."};
  CHECK(detokenize(t) == "Oslo, in (1850).");
}

}  // TEST_SUITE
