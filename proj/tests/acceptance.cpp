// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any failed. Each check enforces its own wall-clock limit.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "metric_table.hpp"
#include "qattack/addany.hpp"
#include "qattack/addsent.hpp"
#include "qattack/campaign.hpp"
#include "qattack/error.hpp"
#include "qattack/extraction.hpp"
#include "qattack/http_model.hpp"
#include "qattack/metrics.hpp"
#include "qattack/pipeline.hpp"
#include "qattack/reference_models.hpp"
#include "stub_server.hpp"

using namespace qattack;
namespace fs = std::filesystem;

namespace {

const fs::path kData = QATTACK_DATA_DIR;

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void check(int id, const char* title, double limit_s, const std::function<Verdict()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = fn();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs > limit_s) {
    v.pass = false;
    v.detail += " [over the " + std::to_string(static_cast<int>(limit_s)) + " s limit]";
  }
  if (!v.pass) ++failures;
  std::printf("criterion %2d %s  %s: %s (%.2f s)\n", id, v.pass ? "PASS" : "FAIL", title,
              v.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

std::vector<QAExample> fixture() { return load_squad(kData / "squad_fixture.json"); }

double top1_f1(const SpanModel& m, const QAExample& ex, const TokenizedText& ctx) {
  return token_f1(m.predict(ex.question, ctx, 1).top().text, ex.gold_texts());
}

// Criteria 3, 4 and 7 share one set of direct attacks on the overlap model.
struct DirectRuns {
  std::vector<AttackOutcome> argmax, kbest;
  bool done = false;
};
DirectRuns direct;

const DirectRuns& direct_runs() {
  if (direct.done) return direct;
  const auto exs = fixture();
  const auto wl = load_wordlist(kData / "common_words.txt");
  const OverlapModel model;
  for (auto mode : {AttackMode::kArgMax, AttackMode::kKBest}) {
    AttackConfig cfg;
    cfg.mode = mode;
    cfg.seed = 1;
    auto& out = mode == AttackMode::kArgMax ? direct.argmax : direct.kbest;
    out.resize(exs.size());
    parallel_for(exs.size(), default_workers(),
                 [&](size_t i) { out[i] = run_attack(exs[i], model, cfg, wl); });
  }
  direct.done = true;
  return direct;
}

PipelineConfig base_config(const fs::path& out) {
  auto c = load_config(kData / "pipeline.cfg");
  set_config_value(c, "out_dir", out.string());
  return c;
}

std::map<std::string, std::string> read_tree(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = read_file(e.path());
  }
  return files;
}

// Independent coverage: plain std::set arithmetic over ids.
bool coverage_agrees(const std::vector<TransferRecord>& a, const std::vector<TransferRecord>& b,
                     const CoverageReport& got) {
  std::map<std::string, double> fa, fb;
  for (const auto& r : a) if (r.ok()) fa[r.example_id] = r.f1_after;
  for (const auto& r : b) if (r.ok()) fb[r.example_id] = r.f1_after;
  std::set<std::string> ids, za, zb;
  double combined = 0;
  for (const auto& [id, f] : fa) {
    if (!fb.count(id)) continue;
    ids.insert(id);
    if (f == 0.0) za.insert(id);
    if (fb[id] == 0.0) zb.insert(id);
    combined += std::min(f, fb[id]);
  }
  size_t both = 0, only_a = 0, only_b = 0;
  for (const auto& id : ids) {
    both += za.count(id) && zb.count(id);
    only_a += za.count(id) && !zb.count(id);
    only_b += !za.count(id) && zb.count(id);
  }
  const size_t neither = ids.size() - both - only_a - only_b;
  const double comb = ids.empty() ? 0.0 : 100.0 * combined / static_cast<double>(ids.size());
  return got.both == both && got.only_a == only_a && got.only_b == only_b &&
         got.neither == neither && std::abs(got.combined_f1 - comb) < 1e-9;
}

double method_f1(const std::vector<AggregateRow>& rows, Method m) {
  for (const auto& r : rows) {
    if (r.method == m) return r.f1_after;
  }
  throw Error(ErrorKind::kValidation, "no aggregate row for " + to_string(m));
}

}  // namespace

int main() {
  const fs::path tmp = fs::temp_directory_path() / "qattack_acceptance";
  fs::remove_all(tmp);

  check(1, "metric hand table", 1, [] {
    size_t ok = 0;
    for (const auto& c : kMetricCases) {
      const auto s = score(c.prediction, c.golds);
      ok += std::abs(s.f1 - c.f1) < 1e-12 && s.em == c.em;
    }
    return Verdict{ok == kMetricCases.size() && ok == 25,
                   std::to_string(ok) + "/" + std::to_string(kMetricCases.size()) + " cases"};
  });

  check(2, "kbest_zero vs brute force", 5, [] {
    std::mt19937_64 rng(2024);
    const char* vocab[] = {"red", "car", "blue", "the", "house", "a", "old"};
    const std::vector<std::string> golds = {"red car"};
    size_t agree = 0, total = 0, positives = 0;
    for (int t = 0; t < 1000; ++t) {
      const size_t n = 1 + rng() % 12;
      std::vector<SpanPrediction> spans;
      for (size_t i = 0; i < n; ++i) {
        std::string text = vocab[rng() % 7];
        if (rng() % 2) text += std::string(" ") + vocab[rng() % 7];
        // Coarse probabilities so ties are common.
        spans.push_back({i, i + rng() % 3, text, static_cast<double>(1 + rng() % 5)});
      }
      double z = 0;
      for (const auto& s : spans) z += s.probability;
      for (auto& s : spans) s.probability /= z;
      const SpanDistribution dist(spans, n);
      for (size_t k : {1, 3, 5}) {
        auto sorted = spans;
        std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
          if (a.probability != b.probability) return a.probability > b.probability;
          if (a.start_token != b.start_token) return a.start_token < b.start_token;
          return a.end_token < b.end_token;
        });
        bool brute = true;
        for (size_t i = 0; i < std::min(k, sorted.size()); ++i) {
          if (token_f1(sorted[i].text, golds) != 0.0) brute = false;
        }
        agree += kbest_zero(dist, golds, k) == brute;
        positives += brute;
        ++total;
      }
    }
    return Verdict{agree == total, std::to_string(agree) + "/" + std::to_string(total) +
                                       " agree, " + std::to_string(positives) + " true"};
  });

  check(3, "objective traces non-increasing", 300, [] {
    const auto& d = direct_runs();
    size_t bad = 0, total = 0;
    for (const auto* set : {&d.argmax, &d.kbest}) {
      for (const auto& o : *set) {
        ++total;
        for (size_t i = 1; i < o.objective_trace.size(); ++i) {
          if (o.objective_trace[i] > o.objective_trace[i - 1]) {
            ++bad;
            break;
          }
        }
      }
    }
    return Verdict{bad == 0 && total == 100,
                   std::to_string(total - bad) + "/" + std::to_string(total) + " monotone traces"};
  });

  check(4, "direct ARGMAX halves overlap-model F1", 300, [] {
    const auto exs = fixture();
    const auto& d = direct_runs();
    const OverlapModel model;
    double before = 0, after = 0;
    for (size_t i = 0; i < exs.size(); ++i) {
      before += top1_f1(model, exs[i], exs[i].context);
      after += top1_f1(model, exs[i], d.argmax[i].perturbed_context);
    }
    before /= static_cast<double>(exs.size());
    after /= static_cast<double>(exs.size());
    return Verdict{after <= 0.5 * before,
                   fmt("mean F1 %.1f -> %.1f", 100 * before, 100 * after)};
  });

  check(5, "extraction on 2000 queries", 600, [] {
    const auto corpus = load_corpus(kData / "corpus.txt");
    const OverlapModel victim;
    ExtractionConfig ec;
    ec.workers = default_workers();
    double agree[2] = {0, 0}, base = 0;
    size_t sizes[2] = {0, 0};
    for (auto scheme : {ExtractionScheme::kWiki, ExtractionScheme::kRandom}) {
      const int s = scheme == ExtractionScheme::kWiki ? 0 : 1;
      const auto ds = build_dataset(scheme, victim, corpus, 2000, ec, 11 + s);
      TrainingHyper hyper;
      hyper.seed = 5;
      const auto m = train_extracted(ds, hyper);
      const std::span<const SynthesizedExample> all(ds.examples);
      const auto held = all.subspan(heldout_begin(all.size()));
      agree[s] = label_agreement(SurrogateSpanModel(m), held);
      sizes[s] = ds.examples.size();
      if (s == 0) base = label_agreement(SurrogateSpanModel(SurrogateModel{}), held);
    }
    const bool pass = agree[0] >= 3 * base && agree[1] <= agree[0] + 0.10;
    return Verdict{pass, fmt("WIKI %.1f%% vs baseline %.1f%%, RANDOM %.1f%%", 100 * agree[0],
                             100 * base, 100 * agree[1]) +
                             ", " + std::to_string(sizes[0]) + "/" + std::to_string(sizes[1]) +
                             " labeled examples"};
  });

  check(6, "transferred KBEST beats ARGMAX", 1800, [&] {
    double sum_k = 0, sum_a = 0;
    int wins = 0;
    std::string per_seed;
    for (int seed : {1, 2, 3}) {
      const fs::path out = tmp / ("seed" + std::to_string(seed));
      auto c = base_config(out);
      set_config_value(c, "seed", std::to_string(seed));
      set_config_value(c, "schemes", "wiki");
      set_config_value(c, "attack_k", "5");
      set_config_value(c, "addsent", "false");
      cmd_pipeline(c);
      const auto recs = parse_records(read_file(records_path(c)));
      const auto agg = aggregate_by_method(recs);
      const double k = method_f1(agg, Method::kWikiKBest);
      const double a = method_f1(agg, Method::kWikiArgMax);
      sum_k += k;
      sum_a += a;
      wins += k < a;
      per_seed += fmt(" seed %.0f: %.2f vs %.2f;", seed, k, a);
    }
    const bool pass = sum_k / 3 <= sum_a / 3 + 2.0 && wins >= 2;
    return Verdict{pass, fmt("mean KBEST %.2f vs ARGMAX %.2f, KBEST lower in %.0f/3;", sum_k / 3,
                             sum_a / 3, wins) +
                             per_seed};
  });

  check(7, "answer preservation and AddSent gold-freedom", 300, [] {
    const auto exs = fixture();
    const auto& d = direct_runs();
    size_t preserved = 0, outcomes = 0;
    for (const auto* set : {&d.argmax, &d.kbest}) {
      for (size_t i = 0; i < exs.size(); ++i) {
        const auto& o = (*set)[i];
        const auto p = apply_perturbation(exs[i].context, o.adversary_tokens, o.placement);
        preserved += answers_preserved(exs[i], p) && p.context.raw == o.perturbed_context.raw;
        ++outcomes;
      }
    }
    AddSentResources res;
    res.lexicon = load_lexicon(kData / "antonyms.tsv");
    res.gazetteers.places = load_entry_list(kData / "places.txt");
    res.gazetteers.person_names = load_entry_list(kData / "person_names.txt");
    res.fake_answers = load_fake_answers(kData / "fake_answers.tsv");
    const AddSentGenerator gen(res);
    size_t clean = 0, cands = 0, kept = 0;
    for (const auto& ex : exs) {
      Rng rng(example_seed(1, ex.id));
      for (const auto& c : gen.gen_candidates(ex, rng, 10)) {
        ++cands;
        clean += !shares_content_token(c.sentence.raw, ex.gold_texts());
        for (auto pl : {Placement::kSuffix, Placement::kPrefix}) {
          kept += answers_preserved(ex, apply_perturbation(ex.context, c.sentence, pl));
        }
      }
    }
    const bool pass = preserved == outcomes && clean == cands && kept == 2 * cands && cands > 0;
    return Verdict{pass, std::to_string(preserved) + "/" + std::to_string(outcomes) +
                             " AddAny contexts preserve answers; " + std::to_string(clean) + "/" +
                             std::to_string(cands) + " AddSent candidates gold-free, " +
                             std::to_string(kept) + "/" + std::to_string(2 * cands) +
                             " placements preserve answers"};
  });

  // Criterion 9 runs before 8 so 8 can reuse its records.
  std::vector<TransferRecord> pipeline_records;
  std::vector<QAExample> pipeline_examples;
  Verdict v9;
  check(9, "pipeline output is deterministic", 600, [&] {
    std::vector<std::map<std::string, std::string>> trees;
    const std::pair<const char*, const char*> runs[] = {{"w1", "1"}, {"w4a", "4"}, {"w4b", "4"}};
    for (const auto& [name, workers] : runs) {
      auto c = base_config(tmp / name);
      set_config_value(c, "workers", workers);
      cmd_pipeline(c);
      trees.push_back(read_tree(tmp / name));
      if (pipeline_records.empty()) {
        pipeline_records = parse_records(read_file(records_path(c)));
        pipeline_examples = load_squad(c.squad);
      }
    }
    const bool same = trees[0] == trees[1] && trees[1] == trees[2];
    return Verdict{same && trees[0].size() >= 10,
                   std::to_string(trees[0].size()) + " files, " +
                       (same ? "byte-identical across runs and worker counts" : "outputs differ")};
  });

  check(8, "coverage vs independent set computation", 60, [&] {
    // Hand fixture: A zeroes {0,1,2,3,6}, B zeroes {2,3,4,8}.
    const double fa[10] = {0, 0, 0, 0, 0.5, 1, 0, 0.25, 1, 0.5};
    const double fb[10] = {1, 0.5, 0, 0, 0, 1, 0.4, 1, 0, 0.2};
    std::vector<TransferRecord> a, b;
    for (int i = 0; i < 10; ++i) {
      TransferRecord r;
      r.example_id = "e" + std::to_string(i);
      r.f1_before = 1.0;
      r.method = Method::kWikiKBest;
      r.f1_after = fa[i];
      a.push_back(r);
      r.method = Method::kAddSent;
      r.f1_after = fb[i];
      b.push_back(r);
    }
    const auto hand = coverage(a, b);
    bool ok = coverage_agrees(a, b, hand) && hand.both == 2 && hand.only_a == 3 &&
              hand.only_b == 2 && hand.neither == 3;
    auto all = a;
    all.insert(all.end(), b.begin(), b.end());
    const auto hand_agg = aggregate_by_method(all);
    ok = ok && hand.combined_f1 <= std::min(method_f1(hand_agg, Method::kWikiKBest),
                                            method_f1(hand_agg, Method::kAddSent));

    // Every pair in the generated campaign records.
    size_t pairs = 0, good = 0;
    if (!pipeline_records.empty()) {
      const AnswerCategorizer cat(Gazetteers{});
      const auto bundle = build_reports(pipeline_records, pipeline_examples, cat);
      for (const auto& row : bundle.coverage) {
        std::vector<TransferRecord> ra, rb;
        for (const auto& r : pipeline_records) {
          if (r.method == row.method_a) ra.push_back(r);
          if (r.method == row.method_b) rb.push_back(r);
        }
        ++pairs;
        good += coverage_agrees(ra, rb, row.report) &&
                row.report.combined_f1 <= std::min(method_f1(bundle.aggregate, row.method_a),
                                                   method_f1(bundle.aggregate, row.method_b)) +
                                              1e-9;
      }
    }
    return Verdict{ok && pairs > 0 && good == pairs,
                   std::string("hand fixture ") + (ok ? "agrees" : "disagrees") + ", " +
                       std::to_string(good) + "/" + std::to_string(pairs) +
                       " campaign method pairs agree"};
  });

  check(10, "analytic gradient vs finite differences", 10, [] {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst = 0;
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<TrainingInstance> insts(3 + rng() % 4);
      for (auto& inst : insts) {
        inst.features.resize(2 + rng() % 7);
        for (auto& f : inst.features) {
          for (auto& x : f.values) x = u(rng);
        }
        inst.target = rng() % inst.features.size();
      }
      std::vector<double> w(kFeatureDim);
      for (auto& x : w) x = u(rng);
      const double l2 = 1e-3;
      const auto g = training_gradient(w, insts, l2);
      for (size_t i = 0; i < kFeatureDim; ++i) {
        const double h = 1e-5;
        auto wp = w, wm = w;
        wp[i] += h;
        wm[i] -= h;
        const double fd =
            (training_objective(wp, insts, l2) - training_objective(wm, insts, l2)) / (2 * h);
        worst = std::max(worst, std::abs(fd - g[i]) / std::max(1e-8, std::abs(fd) + std::abs(g[i])));
      }
    }
    return Verdict{worst < 1e-4, fmt("worst relative error %.2e", worst)};
  });

  check(11, "wire protocol against a stub server", 10, [] {
    using nlohmann::json;
    const RetryPolicy no_wait{0, 0.001};
    const std::vector<WireItem> items = {{"Who?", "Ann met Bob."}};
    bool exact = false, renorm = false, range = false, aligned = false;

    const double p1 = 0.1 + 0.2, p2 = 1.0 - p1;
    {
      StubServer s(fixed_spans(json::array(
          {{{"text", "Bob"}, {"char_start", 8}, {"char_end", 11}, {"probability", p1}},
           {{"text", "Ann"}, {"char_start", 0}, {"char_end", 3}, {"probability", p2}}})));
      ModelEndpoint ep{s.url(), 5.0, 16, std::nullopt};
      const auto r = http_predict(ep, items, 2, no_wait);
      exact = r.size() == 1 && r[0].spans.size() == 2 &&
              std::memcmp(&r[0].spans[0].probability, &p1, sizeof p1) == 0 &&
              std::memcmp(&r[0].spans[1].probability, &p2, sizeof p2) == 0 &&
              r[0].spans[0].char_start == 8 && r[0].spans[0].char_end == 11 &&
              r[0].spans[0].text == "Bob";
    }
    {
      StubServer s(fixed_spans(json::array(
          {{{"text", "Ann"}, {"char_start", 0}, {"char_end", 3}, {"probability", 0.1}},
           {{"text", "Bob"}, {"char_start", 8}, {"char_end", 11}, {"probability", 0.3}}})));
      const HttpModel m({s.url(), 5.0, 16, std::nullopt}, no_wait);
      const auto d = m.predict(tokenize("Who?"), tokenize("Ann met Bob."), 5);
      renorm = d.size() == 2 && d.top().text == "Bob" &&
               std::abs(d.spans()[0].probability - 0.75) < 1e-12 &&
               std::abs(d.spans()[1].probability - 0.25) < 1e-12;
    }
    auto schema_error = [&](StubServer::Handler h, size_t n_items) {
      StubServer s(std::move(h));
      const std::vector<WireItem> many(n_items, items[0]);
      try {
        http_predict({s.url(), 5.0, 16, std::nullopt}, many, 2, no_wait);
      } catch (const Error& e) {
        return e.kind() == ErrorKind::kSchema;
      }
      return false;
    };
    range = schema_error(fixed_spans(json::array({{{"text", "Ann"}, {"char_start", 0},
                                                   {"char_end", 3}, {"probability", 1.2}}})),
                         1);
    aligned = schema_error(
        [](const json&) {
          const json one = {{"spans", json::array({{{"text", "Ann"}, {"char_start", 0},
                                                    {"char_end", 3}, {"probability", 1.0}}})}};
          return StubServer::Reply{200, json{{"results", json::array({one})}}.dump()};
        },
        2);
    return Verdict{exact && renorm && range && aligned,
                   std::string("bit-exact ") + (exact ? "yes" : "no") + ", renormalized " +
                       (renorm ? "yes" : "no") + ", out-of-range rejected " +
                       (range ? "yes" : "no") + ", misaligned rejected " + (aligned ? "yes" : "no")};
  });

  fs::remove_all(tmp);
  std::printf("%d criteria failed\n", failures);
  return failures ? 1 : 0;
}
