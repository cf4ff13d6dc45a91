#include <algorithm>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "qattack/campaign.hpp"
#include "qattack/error.hpp"
#include "qattack/reference_models.hpp"

using namespace qattack;
namespace fs = std::filesystem;

namespace {

TransferRecord rec(const std::string& id, Method m, double after, double before = 1.0) {
  TransferRecord r;
  r.example_id = id;
  r.method = m;
  r.f1_before = before;
  r.f1_after = after;
  return r;
}

// Ten examples; A zeroes {0,1,2,3,6}, B zeroes {2,3,4,8}.
std::pair<std::vector<TransferRecord>, std::vector<TransferRecord>> ten_records() {
  const double fa[10] = {0, 0, 0, 0, 0.5, 1, 0, 0.25, 1, 0.5};
  const double fb[10] = {1, 0.5, 0, 0, 0, 1, 0.4, 1, 0, 0.2};
  std::vector<TransferRecord> a, b;
  for (int i = 0; i < 10; ++i) {
    const std::string id = "e" + std::to_string(i);
    a.push_back(rec(id, Method::kWikiKBest, fa[i]));
    b.push_back(rec(id, Method::kAddSent, fb[i]));
  }
  return {a, b};
}

QAExample make_example(const std::string& id, const std::string& q, const std::string& ctx,
                       const std::string& ans) {
  QAExample ex;
  ex.id = id;
  ex.question = tokenize(q);
  ex.context = tokenize(ctx);
  ex.gold_answers = {{ans, ex.context.raw.find(ans)}};
  return ex;
}

}  // namespace

TEST_SUITE("campaign") {

TEST_CASE("coverage matches set arithmetic") {
  auto [a, b] = ten_records();
  std::set<std::string> sa, sb, all;
  double combined = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    all.insert(a[i].example_id);
    if (a[i].f1_after == 0.0) sa.insert(a[i].example_id);
    if (b[i].f1_after == 0.0) sb.insert(b[i].example_id);
    combined += std::min(a[i].f1_after, b[i].f1_after);
  }
  std::set<std::string> both, only_a, only_b, either;
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::inserter(both, both.end()));
  std::set_difference(sa.begin(), sa.end(), sb.begin(), sb.end(), std::inserter(only_a, only_a.end()));
  std::set_difference(sb.begin(), sb.end(), sa.begin(), sa.end(), std::inserter(only_b, only_b.end()));
  std::set_union(sa.begin(), sa.end(), sb.begin(), sb.end(), std::inserter(either, either.end()));

  const auto c = coverage(a, b);
  CHECK(c.both == both.size());
  CHECK(c.only_a == only_a.size());
  CHECK(c.only_b == only_b.size());
  CHECK(c.neither == all.size() - either.size());
  CHECK(c.only_a + c.only_b + c.both + c.neither == 10);
  CHECK(c.combined_f1 == doctest::Approx(100.0 * combined / 10.0));
  // Frozen from the sets above.
  CHECK(c.both == 2);
  CHECK(c.only_a == 3);
  CHECK(c.only_b == 2);
  CHECK(c.neither == 3);

  const auto agg = aggregate_by_method([&] {
    auto all_recs = a;
    all_recs.insert(all_recs.end(), b.begin(), b.end());
    return all_recs;
  }());
  for (const auto& row : agg) CHECK(c.combined_f1 <= row.f1_after);

  const auto self = coverage(a, a);
  CHECK(self.only_a == 0);
  CHECK(self.only_b == 0);

  b.pop_back();
  CHECK_THROWS_AS(coverage(a, b), Error);
}

TEST_CASE("categories") {
  const Gazetteers g{{"Chicago", "New York"}, {"Marie Curie"}};
  const AnswerCategorizer cat(g);
  auto of = [&](const std::string& ctx, const std::string& ans) {
    const auto t = tokenize(ctx);
    return cat({ans, t.raw.find(ans)}, t);
  };
  CHECK(of("It shipped in 1993 .", "1993") == AnswerCategory::kNumbers);
  CHECK(of("War began on September 1, 1939 .", "September 1, 1939") == AnswerCategory::kDates);
  CHECK(of("The game has multiplayer features .", "multiplayer features") ==
        AnswerCategory::kNounPhrases);
  CHECK(of("Pups are born in spring .", "spring") == AnswerCategory::kDates);
  CHECK(of("They breed during nesting season .", "during nesting season") ==
        AnswerCategory::kNounPhrases);
  CHECK(of("The fair was in Chicago .", "Chicago") == AnswerCategory::kPlaces);
  CHECK(of("Prize went to Marie Curie .", "Marie Curie") == AnswerCategory::kNames);
  CHECK(of("It was built by the Blue Lantern Society .", "Blue Lantern Society") ==
        AnswerCategory::kOtherEnts);
  CHECK(of("They spent years painting fences .", "painting fences") ==
        AnswerCategory::kVerbPhrases);
  CHECK(of("The soup was very hot .", "very hot") == AnswerCategory::kAdjPhrases);
  CHECK(of("He said that the council had voted against it .",
           "the council had voted against it") == AnswerCategory::kClauses);
}

TEST_CASE("transfer with empty adversaries changes nothing") {
  std::vector<QAExample> exs = {
      make_example("b", "Who released Doom ?", "id Software released Doom in 1993 .", "id Software"),
      make_example("a", "Where is the old stadium ?", "The old stadium is in Chicago .", "Chicago")};
  std::vector<AttackOutcome> outs(2);
  outs[0].example_id = "b";
  outs[1].example_id = "a";
  const auto recs = run_transfer(outs, OverlapModel{}, exs, Method::kWikiArgMax, 2);
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].example_id == "a");  // sorted by id
  for (const auto& r : recs) CHECK(r.f1_before == r.f1_after);
}

TEST_CASE("category report totals agree with the aggregate") {
  std::vector<QAExample> exs = {
      make_example("a", "When ?", "It shipped in 1993 .", "1993"),
      make_example("b", "What ?", "The game has multiplayer features .", "multiplayer features"),
      make_example("c", "When ?", "It shipped in 1994 .", "1994")};
  std::vector<TransferRecord> recs = {rec("a", Method::kAddSent, 0.0), rec("b", Method::kAddSent, 0.5),
                                      rec("c", Method::kAddSent, 1.0)};
  const AnswerCategorizer cat(Gazetteers{});
  const auto rows = category_report(recs, exs, cat);
  REQUIRE(rows.size() == 11);
  CHECK(rows.back().category == "Total");
  CHECK(rows.back().count == 3);
  CHECK(rows.back().f1_after == doctest::Approx(50.0));
  double freq = 0;
  for (size_t i = 0; i + 1 < rows.size(); ++i) freq += rows[i].frequency;
  CHECK(freq == doctest::Approx(100.0));
  const auto numbers = std::find_if(rows.begin(), rows.end(),
                                    [](const CategoryRow& r) { return r.category == "Numbers"; });
  REQUIRE(numbers != rows.end());
  CHECK(numbers->count == 2);
  CHECK(numbers->f1_after == doctest::Approx(50.0));
  CHECK(numbers->average_length == 1.0);
  const auto agg = aggregate_by_method(recs);
  REQUIRE(agg.size() == 1);
  CHECK(agg[0].f1_after == doctest::Approx(rows.back().f1_after));
}

TEST_CASE("aggregate skips failed records") {
  auto bad = rec("x", Method::kWikiKBest, 0.0);
  bad.error = "timeout";
  const std::vector<TransferRecord> recs = {rec("y", Method::kWikiKBest, 1.0, 1.0), bad};
  const auto agg = aggregate_by_method(recs);
  REQUIRE(agg.size() == 1);
  CHECK(agg[0].count == 2);  // errors are counted, not averaged
  CHECK(agg[0].errors == 1);
  CHECK(agg[0].f1_after == 100.0);
}

TEST_CASE("records round-trip and reports are deterministic") {
  auto [a, b] = ten_records();
  a[3].search_f1 = 0.0;
  a[4].adversary = "river \"stone\" cloud";
  std::vector<TransferRecord> all = a;
  all.insert(all.end(), b.begin(), b.end());
  const auto back = parse_records(serialize_records(all));
  REQUIRE(back.size() == all.size());
  CHECK(back[3].search_f1 == 0.0);
  CHECK(back[4].adversary == a[4].adversary);
  CHECK(serialize_records(back) == serialize_records(all));

  std::vector<QAExample> exs;
  for (int i = 0; i < 10; ++i) {
    exs.push_back(make_example("e" + std::to_string(i), "What ?", "Some cats sleep .", "cats"));
  }
  const AnswerCategorizer cat(Gazetteers{});
  const auto bundle = build_reports(all, exs, cat);
  CHECK(bundle.coverage.size() == 1);
  const Provenance prov{"0123456789abcdef", 7};
  const auto dir = fs::temp_directory_path() / "qattack_campaign_test";
  fs::remove_all(dir);
  for (auto fmt : {ReportFormat::kCsv, ReportFormat::kJson}) {
    const auto first = emit_report(bundle, fmt, dir / "one", &prov);
    const auto second = emit_report(build_reports(all, exs, cat), fmt, dir / "two", &prov);
    REQUIRE(first.size() == 4);
    for (size_t i = 0; i < first.size(); ++i) {
      CHECK(read_file(first[i]) == read_file(second[i]));
      CHECK(read_file(first[i]).find("0123456789abcdef") != std::string::npos);
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("method names") {
  for (auto m : {Method::kWikiKBest, Method::kWikiArgMax, Method::kRandomKBest,
                 Method::kRandomArgMax, Method::kAddSent, Method::kAddOneSent}) {
    CHECK(parse_method(to_string(m)) == m);
  }
  CHECK(to_string(Method::kWikiKBest) == "W-A-KBEST");
  CHECK_THROWS_AS(parse_method("X"), Error);
}

}  // TEST_SUITE
