#include "doctest.h"
#include "qattack/corpus.hpp"
#include "qattack/error.hpp"

using namespace qattack;

TEST_SUITE("corpus") {

TEST_CASE("tokenize splits punctuation and keeps offsets") {
  const auto t = tokenize("Hello, world (again)!");
  const std::vector<std::string> want = {"Hello", ",", "world", "(", "again", ")", "!"};
  CHECK(t.tokens == want);
  for (size_t i = 0; i < t.size(); ++i) {
    CHECK(t.raw.substr(t.offsets[i].first, t.offsets[i].second - t.offsets[i].first) ==
          t.tokens[i]);
  }
}

TEST_CASE("non-ascii bytes are word characters") {
  const auto t = tokenize("Beyonc\xc3\xa9 sang.");
  REQUIRE(t.size() == 3);
  CHECK(t.tokens[0] == "Beyonc\xc3\xa9");
}

TEST_CASE("codepoint offsets") {
  const std::string s = "a\xc3\xa9z";  // a é z
  CHECK(codepoint_to_byte(s, 2) == 3);
  CHECK(byte_to_codepoint(s, 3) == 2);
  CHECK(codepoint_to_byte(s, 99) == s.size());
}

TEST_CASE("squad round trip with code point offsets") {
  const std::string doc = R"({"version":"1.1","data":[{"title":"T","paragraphs":[
    {"context":"Café owners met in Paris in 1900.",
     "qas":[{"id":"q1","question":"Where did they meet?",
             "answers":[{"text":"Paris","answer_start":19}]}]}]}]})";
  const auto exs = parse_squad(doc, "inline");
  REQUIRE(exs.size() == 1);
  const auto& ex = exs[0];
  CHECK(ex.id == "q1");
  REQUIRE(ex.gold_answers.size() == 1);
  CHECK(answer_matches(ex.context, ex.gold_answers[0]));
  CHECK(ex.gold_answers[0].char_start == 20);  // byte offset: é is two bytes

  const auto again = parse_squad(serialize_squad(exs), "roundtrip");
  REQUIRE(again.size() == 1);
  CHECK(again[0].gold_answers[0].char_start == 20);
  CHECK(again[0].context.raw == ex.context.raw);
}

TEST_CASE("squad answer mismatch is a parse error") {
  const std::string doc = R"({"data":[{"paragraphs":[{"context":"abc def",
    "qas":[{"id":"q","question":"x?","answers":[{"text":"def","answer_start":0}]}]}]}]})";
  CHECK_THROWS_AS(parse_squad(doc, "bad"), Error);
}

TEST_CASE("wordlist and corpus") {
  const auto wl = parse_wordlist("Alpha\n\n beta \nalpha\ngamma\n");
  const std::vector<std::string> want = {"alpha", "beta", "gamma"};
  CHECK(wl.words == want);
  CHECK_THROWS_AS(parse_wordlist("two words\n"), Error);

  auto store = make_corpus({tokenize("one two three"), tokenize("four , five")});
  CHECK(store.paragraphs.size() == 2);
  for (const auto& t : store.token_pool) CHECK_FALSE(t.empty());
}

}  // TEST_SUITE
