#include "qattack/campaign.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

#include "qattack/error.hpp"
#include "qattack/metrics.hpp"
#include "qattack/parallel.hpp"

namespace qattack {

namespace {

struct MethodName {
  Method method;
  const char* name;
};

constexpr MethodName kMethodNames[] = {
    {Method::kWikiKBest, "W-A-KBEST"},       {Method::kWikiArgMax, "W-A-ARGMAX"},
    {Method::kRandomKBest, "R-A-KBEST"},     {Method::kRandomArgMax, "R-A-ARGMAX"},
    {Method::kAddSent, "ADDSENT"},           {Method::kAddOneSent, "ADDONESENT"},
};

double pct(double x) { return 100.0 * x; }

std::string fixed(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", x);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot open for writing: " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::kIo, "write failed: " + path.string());
}

nlohmann::ordered_json record_json(const TransferRecord& r) {
  nlohmann::ordered_json j = {{"example_id", r.example_id},
                              {"method", to_string(r.method)},
                              {"f1_before", r.f1_before},
                              {"f1_after", r.f1_after},
                              {"em_after", r.em_after},
                              {"adversary", r.adversary}};
  j["search_f1"] = r.search_f1 ? nlohmann::ordered_json(*r.search_f1) : nlohmann::ordered_json();
  j["error"] = r.error;
  j["attack_failed"] = r.attack_failed;
  return j;
}

std::string opt_fixed(const std::optional<double>& x) { return x ? fixed(*x) : ""; }

}  // namespace

std::string to_string(Method method) {
  for (const auto& m : kMethodNames) {
    if (m.method == method) return m.name;
  }
  return "?";
}

Method parse_method(std::string_view name) {
  for (const auto& m : kMethodNames) {
    if (name == m.name) return m.method;
  }
  throw Error(ErrorKind::kValidation, "unknown method: " + std::string(name));
}

std::vector<TransferRecord> run_transfer(std::span<const AttackOutcome> outcomes,
                                         const SpanModel& victim,
                                         std::span<const QAExample> examples, Method method,
                                         size_t workers) {
  std::unordered_map<std::string, const QAExample*> by_id;
  for (const auto& ex : examples) by_id.emplace(ex.id, &ex);
  std::vector<const AttackOutcome*> order;
  for (const auto& o : outcomes) {
    if (!by_id.count(o.example_id)) {
      throw Error(ErrorKind::kValidation, "outcome for unknown example id: " + o.example_id);
    }
    order.push_back(&o);
  }
  std::sort(order.begin(), order.end(),
            [](auto* a, auto* b) { return a->example_id < b->example_id; });

  std::vector<TransferRecord> records(order.size());
  parallel_for(order.size(), workers, [&](size_t i) {
    const AttackOutcome& o = *order[i];
    const QAExample& ex = *by_id.at(o.example_id);
    TransferRecord& r = records[i];
    r.example_id = o.example_id;
    r.method = method;
    r.adversary = detokenize_adversary(o.adversary_tokens);
    r.search_f1 = o.search_top1_f1;
    const Perturbation p = apply_perturbation(ex.context, o.adversary_tokens, o.placement);
    if (!answers_preserved(ex, p)) {
      throw Error(ErrorKind::kRuntime, o.example_id + ": perturbation moved the gold answer");
    }
    const auto golds = ex.gold_texts();
    try {
      const std::array<PredictItem, 2> items = {PredictItem{&ex.question, &ex.context},
                                                PredictItem{&ex.question, &p.context}};
      const auto dists = predict_batch(victim, items, 1);
      r.f1_before = token_f1(dists[0].top().text, golds);
      const auto after = score(dists[1].top().text, golds);
      r.f1_after = after.f1;
      r.em_after = after.em;
    } catch (const Error& e) {
      if (!e.is_remote()) throw;
      r.error = e.what();
    }
  });
  return records;
}

std::string detokenize_adversary(std::span<const std::string> tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

std::vector<AggregateRow> aggregate_by_method(std::span<const TransferRecord> records) {
  std::map<Method, std::vector<const TransferRecord*>> groups;
  for (const auto& r : records) groups[r.method].push_back(&r);
  std::vector<AggregateRow> rows;
  for (const auto& [method, group] : groups) {
    AggregateRow row;
    row.method = method;
    row.count = group.size();
    double before = 0, after = 0, em = 0, search = 0;
    size_t ok = 0, with_search = 0;
    for (const auto* r : group) {
      if (!r->ok()) {
        ++row.errors;
        continue;
      }
      ++ok;
      before += r->f1_before;
      after += r->f1_after;
      em += r->em_after ? 1.0 : 0.0;
      if (r->search_f1) {
        search += *r->search_f1;
        ++with_search;
      }
    }
    if (ok > 0) {
      row.f1_before = pct(before / ok);
      row.f1_after = pct(after / ok);
      row.em_after = pct(em / ok);
    }
    if (with_search > 0) row.search_f1 = pct(search / with_search);
    rows.push_back(row);
  }
  return rows;
}

std::vector<CategoryRow> category_report(std::span<const TransferRecord> records,
                                         std::span<const QAExample> examples,
                                         const AnswerCategorizer& categorizer) {
  std::unordered_map<std::string, const QAExample*> by_id;
  for (const auto& ex : examples) by_id.emplace(ex.id, &ex);

  struct Acc {
    size_t n = 0;
    double before = 0, after = 0, length = 0;
  };
  std::map<AnswerCategory, Acc> acc;
  Acc total;
  for (const auto& r : records) {
    if (!r.ok()) continue;
    auto it = by_id.find(r.example_id);
    if (it == by_id.end() || it->second->gold_answers.empty()) {
      throw Error(ErrorKind::kValidation, "record for unknown example id: " + r.example_id);
    }
    const QAExample& ex = *it->second;
    const AnswerSpan& gold = ex.gold_answers.front();
    const double len = static_cast<double>(tokenize(gold.text).size());
    for (Acc* a : {&acc[categorizer(gold, ex.context)], &total}) {
      ++a->n;
      a->before += r.f1_before;
      a->after += r.f1_after;
      a->length += len;
    }
  }
  auto row = [&](std::string name, const Acc& a) {
    CategoryRow out;
    out.category = std::move(name);
    out.count = a.n;
    if (a.n > 0) {
      out.frequency = pct(static_cast<double>(a.n) / static_cast<double>(total.n));
      out.f1_before = pct(a.before / a.n);
      out.f1_after = pct(a.after / a.n);
      out.average_length = a.length / a.n;
    }
    return out;
  };
  std::vector<CategoryRow> rows;
  for (auto c : kAllCategories) rows.push_back(row(to_string(c), acc[c]));
  rows.push_back(row("Total", total));
  return rows;
}

CoverageReport coverage(std::span<const TransferRecord> records_a,
                        std::span<const TransferRecord> records_b) {
  std::set<std::string> ids_a, ids_b;
  for (const auto& r : records_a) ids_a.insert(r.example_id);
  for (const auto& r : records_b) ids_b.insert(r.example_id);
  if (ids_a != ids_b) {
    throw Error(ErrorKind::kValidation, "coverage: the two record sets cover different examples");
  }
  // Pairs where either side failed on the victim are left out.
  std::unordered_map<std::string, const TransferRecord*> b_by_id;
  for (const auto& r : records_b) {
    if (r.ok()) b_by_id.emplace(r.example_id, &r);
  }
  CoverageReport rep;
  double combined = 0;
  size_t n = 0;
  for (const auto& a : records_a) {
    if (!a.ok()) continue;
    auto it = b_by_id.find(a.example_id);
    if (it == b_by_id.end()) continue;
    const TransferRecord& b = *it->second;
    const bool ca = a.f1_after == 0.0, cb = b.f1_after == 0.0;
    if (ca && cb) {
      ++rep.both;
    } else if (ca) {
      ++rep.only_a;
    } else if (cb) {
      ++rep.only_b;
    } else {
      ++rep.neither;
    }
    combined += std::min(a.f1_after, b.f1_after);
    ++n;
  }
  if (n > 0) rep.combined_f1 = pct(combined / n);
  return rep;
}

ReportFormat parse_report_format(std::string_view name) {
  if (name == "csv") return ReportFormat::kCsv;
  if (name == "json") return ReportFormat::kJson;
  throw Error(ErrorKind::kValidation, "unknown report format: " + std::string(name));
}

ReportBundle build_reports(std::vector<TransferRecord> records,
                           std::span<const QAExample> examples,
                           const AnswerCategorizer& categorizer) {
  std::stable_sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
    if (a.method != b.method) return a.method < b.method;
    return a.example_id < b.example_id;
  });
  ReportBundle bundle;
  bundle.aggregate = aggregate_by_method(records);
  std::map<Method, std::vector<TransferRecord>> groups;
  for (const auto& r : records) groups[r.method].push_back(r);
  for (const auto& [method, group] : groups) {
    bundle.categories.push_back({method, category_report(group, examples, categorizer)});
  }
  if (auto sent = groups.find(Method::kAddSent); sent != groups.end()) {
    for (auto m : {Method::kWikiKBest, Method::kWikiArgMax, Method::kRandomKBest,
                   Method::kRandomArgMax}) {
      auto it = groups.find(m);
      if (it == groups.end()) continue;
      bundle.coverage.push_back({m, Method::kAddSent, coverage(it->second, sent->second)});
    }
  }
  bundle.records = std::move(records);
  return bundle;
}

std::vector<std::filesystem::path> emit_report(const ReportBundle& bundle, ReportFormat format,
                                               const std::filesystem::path& out_dir,
                                               const Provenance* provenance) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create " + out_dir.string() + ": " + ec.message());

  std::vector<std::filesystem::path> written;
  const bool csv = format == ReportFormat::kCsv;
  const std::string ext = csv ? ".csv" : ".json";

  std::string csv_header;
  if (provenance) {
    csv_header = "# config_hash=" + provenance->config_hash +
                 " seed=" + std::to_string(provenance->seed) + "\n";
  }
  auto json_doc = [&](nlohmann::ordered_json rows) {
    nlohmann::ordered_json doc;
    if (provenance) {
      doc["config_hash"] = provenance->config_hash;
      doc["seed"] = provenance->seed;
    }
    doc["rows"] = std::move(rows);
    return doc.dump(2) + "\n";
  };
  auto emit = [&](const std::string& stem, const std::string& csv_text,
                  nlohmann::ordered_json json_rows) {
    const auto path = out_dir / (stem + ext);
    write_text(path, csv ? csv_header + csv_text : json_doc(std::move(json_rows)));
    written.push_back(path);
  };

  {
    std::string text = "example_id,method,f1_before,f1_after,em_after,search_f1,attack_failed,error,adversary\n";
    auto rows = nlohmann::ordered_json::array();
    for (const auto& r : bundle.records) {
      text += csv_field(r.example_id) + "," + to_string(r.method) + "," + fixed(r.f1_before) + "," +
              fixed(r.f1_after) + "," + (r.em_after ? "1" : "0") + "," + opt_fixed(r.search_f1) +
              "," + (r.attack_failed ? "1" : "0") + "," + csv_field(r.error) + "," +
              csv_field(r.adversary) + "\n";
      rows.push_back(record_json(r));
    }
    emit("transfer_records", text, std::move(rows));
  }
  {
    std::string text = "method,count,errors,search_f1,f1_before,f1_after,em_after\n";
    auto rows = nlohmann::ordered_json::array();
    for (const auto& a : bundle.aggregate) {
      text += to_string(a.method) + "," + std::to_string(a.count) + "," + std::to_string(a.errors) +
              "," + opt_fixed(a.search_f1) + "," + fixed(a.f1_before) + "," + fixed(a.f1_after) +
              "," + fixed(a.em_after) + "\n";
      nlohmann::ordered_json j = {{"method", to_string(a.method)},
                                  {"count", a.count},
                                  {"errors", a.errors}};
      j["search_f1"] = a.search_f1 ? nlohmann::ordered_json(*a.search_f1) : nlohmann::ordered_json();
      j["f1_before"] = a.f1_before;
      j["f1_after"] = a.f1_after;
      j["em_after"] = a.em_after;
      rows.push_back(std::move(j));
    }
    emit("aggregate", text, std::move(rows));
  }
  {
    std::string text = "method,category,count,frequency,f1_before,f1_after,average_length\n";
    auto rows = nlohmann::ordered_json::array();
    for (const auto& mc : bundle.categories) {
      for (const auto& c : mc.rows) {
        text += to_string(mc.method) + "," + c.category + "," + std::to_string(c.count) + "," +
                fixed(c.frequency) + "," + fixed(c.f1_before) + "," + fixed(c.f1_after) + "," +
                fixed(c.average_length) + "\n";
        rows.push_back({{"method", to_string(mc.method)},
                        {"category", c.category},
                        {"count", c.count},
                        {"frequency", c.frequency},
                        {"f1_before", c.f1_before},
                        {"f1_after", c.f1_after},
                        {"average_length", c.average_length}});
      }
    }
    emit("categories", text, std::move(rows));
  }
  {
    std::string text = "method_a,method_b,only_a,only_b,both,neither,combined_f1\n";
    auto rows = nlohmann::ordered_json::array();
    for (const auto& c : bundle.coverage) {
      const auto& r = c.report;
      text += to_string(c.method_a) + "," + to_string(c.method_b) + "," + std::to_string(r.only_a) +
              "," + std::to_string(r.only_b) + "," + std::to_string(r.both) + "," +
              std::to_string(r.neither) + "," + fixed(r.combined_f1) + "\n";
      rows.push_back({{"method_a", to_string(c.method_a)},
                      {"method_b", to_string(c.method_b)},
                      {"only_a", r.only_a},
                      {"only_b", r.only_b},
                      {"both", r.both},
                      {"neither", r.neither},
                      {"combined_f1", r.combined_f1}});
    }
    emit("coverage", text, std::move(rows));
  }
  return written;
}

std::string serialize_records(std::span<const TransferRecord> records,
                              const Provenance* provenance) {
  std::ostringstream out;
  nlohmann::ordered_json header = {{"format", "qattack-transfer"}, {"records", records.size()}};
  if (provenance) {
    header["config_hash"] = provenance->config_hash;
    header["seed"] = provenance->seed;
  }
  out << header.dump() << "\n";
  for (const auto& r : records) out << record_json(r).dump() << "\n";
  return out.str();
}

std::vector<TransferRecord> parse_records(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::kParse, "transfer records file is empty");
  auto header = nlohmann::json::parse(line, nullptr, false);
  if (header.is_discarded() || header.value("format", "") != "qattack-transfer") {
    throw Error(ErrorKind::kParse, "transfer records file: bad header line");
  }
  std::vector<TransferRecord> out;
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw Error(ErrorKind::kParse, "transfer records line " + std::to_string(lineno) + ": bad JSON");
    }
    try {
      TransferRecord r;
      r.example_id = j.at("example_id").get<std::string>();
      r.method = parse_method(j.at("method").get<std::string>());
      r.f1_before = j.at("f1_before").get<double>();
      r.f1_after = j.at("f1_after").get<double>();
      r.em_after = j.at("em_after").get<bool>();
      r.adversary = j.value("adversary", "");
      if (j.contains("search_f1") && !j["search_f1"].is_null()) {
        r.search_f1 = j["search_f1"].get<double>();
      }
      r.error = j.value("error", "");
      r.attack_failed = j.value("attack_failed", false);
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kParse,
                  "transfer records line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace qattack
