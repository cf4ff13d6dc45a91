#include "qattack/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "qattack/addsent.hpp"
#include "qattack/error.hpp"
#include "qattack/http_model.hpp"
#include "qattack/parallel.hpp"

namespace qattack {

namespace {

std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::istringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

Error bad_value(const std::string& key, const std::string& value, const std::string& why) {
  return Error(ErrorKind::kValidation, "config " + key + "='" + value + "': " + why);
}

uint64_t to_u64(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw bad_value(key, v, "expected a non-negative integer");
  }
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw bad_value(key, v, "out of range");
  }
}

size_t to_size(const std::string& key, const std::string& v) {
  return static_cast<size_t>(to_u64(key, v));
}

double to_double(const std::string& key, const std::string& v) {
  size_t used = 0;
  double d = 0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    throw bad_value(key, v, "expected a number");
  }
  if (used != v.size() || !std::isfinite(d)) throw bad_value(key, v, "expected a number");
  return d;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw bad_value(key, v, "expected true or false");
}

std::filesystem::path to_path(const std::string& v, const std::filesystem::path& base) {
  std::filesystem::path p(v);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal();
}

// Keys that cannot change any report byte.
bool excluded_from_hash(const std::string& key) {
  return key == "out_dir" || key == "workers" || key == "format";
}

void require_file(const std::filesystem::path& p, const char* key) {
  if (p.empty()) throw Error(ErrorKind::kValidation, std::string("config ") + key + " is not set");
  std::error_code ec;
  if (!std::filesystem::is_regular_file(p, ec)) {
    throw Error(ErrorKind::kValidation,
                std::string("config ") + key + ": no such file: " + p.string());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot open for writing: " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::kIo, "write failed: " + path.string());
}

void ensure_out_dir(const PipelineConfig& c) {
  std::error_code ec;
  std::filesystem::create_directories(c.out_dir, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create " + c.out_dir.string() + ": " + ec.message());
}

void say(const LogFn& log, const std::string& msg) {
  if (log) log(msg);
}

uint64_t stage_seed(uint64_t seed, const std::string& stage) {
  return mix_seed(seed, fnv1a64(stage));
}

template <typename Fn>
auto run_stage(const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.kind(), std::string("stage ") + name + ": " + e.what());
  }
}

}  // namespace

std::string hash_canonical(const std::map<std::string, std::string>& canonical) {
  std::string text;
  for (const auto& [k, v] : canonical) {
    if (excluded_from_hash(k)) continue;
    text += k + "=" + v + "\n";
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(text)));
  return buf;
}

std::string PipelineConfig::config_hash() const { return hash_canonical(canonical); }

void set_config_value(PipelineConfig& c, const std::string& key, const std::string& raw,
                      const std::filesystem::path& base) {
  const std::string v = trim(raw);
  auto& a = c.attack;
  if (key == "victim") {
    if (v != kBuiltinVictim && v.rfind("http://", 0) != 0 && v.rfind("https://", 0) != 0) {
      throw bad_value(key, v, "expected builtin-overlap or an http(s) URL");
    }
    c.victim = v;
  } else if (key == "victim_timeout") {
    c.victim_timeout = to_double(key, v);
  } else if (key == "victim_max_batch") {
    c.victim_max_batch = to_size(key, v);
  } else if (key == "victim_retries") {
    c.victim_retries = static_cast<int>(to_size(key, v));
  } else if (key == "overlap_temperature") {
    c.overlap_temperature = to_double(key, v);
  } else if (key == "squad") {
    c.squad = to_path(v, base);
  } else if (key == "corpus") {
    c.corpus = to_path(v, base);
  } else if (key == "wordlist") {
    c.wordlist = to_path(v, base);
  } else if (key == "antonyms") {
    c.antonyms = to_path(v, base);
  } else if (key == "places") {
    c.places = to_path(v, base);
  } else if (key == "person_names") {
    c.person_names = to_path(v, base);
  } else if (key == "fake_answers") {
    c.fake_answers = to_path(v, base);
  } else if (key == "schemes") {
    c.schemes.clear();
    for (const auto& s : split_list(v)) c.schemes.push_back(parse_scheme(s));
  } else if (key == "budget") {
    c.budget = to_size(key, v);
  } else if (key == "min_paragraph_tokens") {
    c.min_paragraph_tokens = to_size(key, v);
  } else if (key == "query_length_min") {
    c.extraction.query_length.first = to_size(key, v);
  } else if (key == "query_length_max") {
    c.extraction.query_length.second = to_size(key, v);
  } else if (key == "random_context_min") {
    c.extraction.random_context_length.first = to_size(key, v);
  } else if (key == "random_context_max") {
    c.extraction.random_context_length.second = to_size(key, v);
  } else if (key == "train_epochs") {
    c.training.epochs = static_cast<int>(to_size(key, v));
  } else if (key == "train_lr") {
    c.training.learning_rate = to_double(key, v);
  } else if (key == "train_l2") {
    c.training.l2 = to_double(key, v);
  } else if (key == "attack_modes") {
    c.modes.clear();
    for (const auto& s : split_list(v)) c.modes.push_back(parse_attack_mode(s));
  } else if (key == "attack_num_tokens") {
    a.num_tokens = to_size(key, v);
  } else if (key == "attack_candidates") {
    a.candidates_per_step = to_size(key, v);
  } else if (key == "attack_epochs") {
    a.epochs = to_size(key, v);
  } else if (key == "attack_extra_particles") {
    a.extra_particles = to_size(key, v);
  } else if (key == "attack_extra_epochs") {
    a.extra_epochs = to_size(key, v);
  } else if (key == "attack_k") {
    a.k = to_size(key, v);
  } else if (key == "attack_search_top_k") {
    a.search_top_k = to_size(key, v);
  } else if (key == "attack_placement") {
    a.placement = parse_placement(v);
  } else if (key == "addsent") {
    c.addsent = to_bool(key, v);
  } else if (key == "addsent_candidates") {
    c.addsent_candidates = to_size(key, v);
  } else if (key == "seed") {
    c.seed = to_u64(key, v);
  } else if (key == "workers") {
    c.workers = to_size(key, v);
  } else if (key == "out_dir") {
    c.out_dir = to_path(v, base);
  } else if (key == "format") {
    c.format = parse_report_format(v);
  } else {
    throw Error(ErrorKind::kValidation, "unknown config key: " + key);
  }
  c.canonical[key] = v;
}

PipelineConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  PipelineConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::kParse, "config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(t).substr(0, eq));
    if (c.canonical.count(key)) {
      throw Error(ErrorKind::kParse, "config line " + std::to_string(lineno) + ": duplicate key " + key);
    }
    set_config_value(c, key, t.substr(eq + 1), base_dir);
  }
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path), path.parent_path());
}

void PipelineConfig::validate() const {
  require_file(squad, "squad");
  require_file(corpus, "corpus");
  require_file(wordlist, "wordlist");
  if (addsent) {
    require_file(antonyms, "antonyms");
    require_file(places, "places");
    require_file(person_names, "person_names");
    require_file(fake_answers, "fake_answers");
  }
  if (schemes.empty()) throw Error(ErrorKind::kValidation, "config schemes is empty");
  if (modes.empty()) throw Error(ErrorKind::kValidation, "config attack_modes is empty");
  if (budget == 0) throw Error(ErrorKind::kValidation, "config budget must be positive");
  if (workers == 0) throw Error(ErrorKind::kValidation, "config workers must be positive");
  if (addsent && addsent_candidates == 0) {
    throw Error(ErrorKind::kValidation, "config addsent_candidates must be positive");
  }
  auto check_range = [](const LengthRange& r, const char* what) {
    if (r.first == 0 || r.first > r.second) {
      throw Error(ErrorKind::kValidation, std::string("config ") + what + ": bad range");
    }
  };
  check_range(extraction.query_length, "query_length");
  check_range(extraction.random_context_length, "random_context");
  if (training.epochs < 1 || !(training.learning_rate > 0) || training.l2 < 0) {
    throw Error(ErrorKind::kValidation, "config training hyperparameters out of range");
  }
  attack.validate();
  if (victim == kBuiltinVictim) {
    OverlapModelConfig{8, overlap_temperature, std::nullopt}.validate();
  } else {
    ModelEndpoint{victim, victim_timeout, victim_max_batch, std::nullopt}.validate();
  }
}

std::unique_ptr<SpanModel> make_victim(const PipelineConfig& c) {
  if (c.victim == kBuiltinVictim) {
    OverlapModelConfig oc;
    oc.temperature = c.overlap_temperature;
    return std::make_unique<OverlapModel>(oc);
  }
  ModelEndpoint ep{c.victim, c.victim_timeout, c.victim_max_batch, std::nullopt};
  if (const char* tok = std::getenv(std::string(kAuthTokenEnv).c_str()); tok && *tok) {
    ep.auth_token = tok;
  }
  return std::make_unique<HttpModel>(ep, RetryPolicy{c.victim_retries, 0.5});
}

Method addany_method(ExtractionScheme scheme, AttackMode mode) {
  const bool wiki = scheme == ExtractionScheme::kWiki;
  if (mode == AttackMode::kKBest) return wiki ? Method::kWikiKBest : Method::kRandomKBest;
  return wiki ? Method::kWikiArgMax : Method::kRandomArgMax;
}

std::filesystem::path dataset_path(const PipelineConfig& c, ExtractionScheme s) {
  return c.out_dir / ("extraction_" + to_string(s) + ".jsonl");
}
std::filesystem::path surrogate_path(const PipelineConfig& c, ExtractionScheme s) {
  return c.out_dir / ("surrogate_" + to_string(s) + ".model");
}
std::filesystem::path outcomes_path(const PipelineConfig& c, Method m) {
  return c.out_dir / ("outcomes_" + to_string(m) + ".jsonl");
}
std::filesystem::path records_path(const PipelineConfig& c) {
  return c.out_dir / "transfer_records.jsonl";
}

std::vector<SchemeSummary> cmd_extract(const PipelineConfig& config, const LogFn& log) {
  config.validate();
  ensure_out_dir(config);
  const Provenance prov = config.provenance();
  const CorpusStore corpus = load_corpus(config.corpus, config.min_paragraph_tokens);
  const auto victim = make_victim(config);
  ExtractionConfig ec = config.extraction;
  ec.workers = config.workers;

  std::vector<SchemeSummary> summaries;
  nlohmann::ordered_json doc = {{"config_hash", prov.config_hash}, {"seed", prov.seed}};
  doc["schemes"] = nlohmann::ordered_json::array();
  for (auto scheme : config.schemes) {
    const std::string name = to_string(scheme);
    ExtractionDataset ds;
    try {
      ds = build_dataset(scheme, *victim, corpus, config.budget, ec,
                         stage_seed(config.seed, "extract:" + name));
    } catch (const ExtractionAborted& e) {
      save_dataset(e.partial(), config.out_dir / ("extraction_" + name + ".partial.jsonl"), &prov);
      throw;
    }
    save_dataset(ds, dataset_path(config, scheme), &prov);

    TrainingHyper hyper = config.training;
    hyper.seed = stage_seed(config.seed, "train:" + name);
    const SurrogateModel model = train_extracted(ds, hyper);
    save_surrogate(model, surrogate_path(config, scheme));

    const std::span<const SynthesizedExample> all(ds.examples);
    const auto held = all.subspan(heldout_begin(all.size()));
    SchemeSummary s;
    s.scheme = scheme;
    s.examples = ds.examples.size();
    s.queries_spent = ds.queries_spent;
    s.heldout_agreement = label_agreement(SurrogateSpanModel(model), held);
    s.baseline_agreement = label_agreement(SurrogateSpanModel(SurrogateModel{}), held);
    s.final_loss = model.training_meta.final_loss;
    summaries.push_back(s);
    doc["schemes"].push_back({{"scheme", name},
                              {"examples", s.examples},
                              {"queries_spent", s.queries_spent},
                              {"heldout_agreement", s.heldout_agreement},
                              {"baseline_agreement", s.baseline_agreement},
                              {"final_loss", s.final_loss}});
    char buf[160];
    std::snprintf(buf, sizeof buf, "extract %s: %zu examples, held-out agreement %.1f%% (baseline %.1f%%)",
                  name.c_str(), s.examples, 100 * s.heldout_agreement, 100 * s.baseline_agreement);
    say(log, buf);
  }
  write_text(config.out_dir / "extraction_summary.json", doc.dump(2) + "\n");
  return summaries;
}

std::vector<std::filesystem::path> cmd_attack(const PipelineConfig& config, const LogFn& log) {
  config.validate();
  ensure_out_dir(config);
  const Provenance prov = config.provenance();
  const auto examples = load_squad(config.squad);
  const WordList wordlist = load_wordlist(config.wordlist);

  std::vector<std::filesystem::path> written;
  for (auto scheme : config.schemes) {
    const auto model_file = surrogate_path(config, scheme);
    if (!std::filesystem::exists(model_file)) {
      throw Error(ErrorKind::kValidation, "missing surrogate " + model_file.string() + "; run extract first");
    }
    const SurrogateSpanModel surrogate(load_surrogate(model_file));
    for (auto mode : config.modes) {
      const Method method = addany_method(scheme, mode);
      AttackConfig ac = config.attack;
      ac.mode = mode;
      // Modes share the seed so they start from the same random sequences.
      ac.seed = stage_seed(config.seed, "attack:" + to_string(scheme));
      std::vector<std::optional<AttackOutcome>> slots(examples.size());
      try {
        parallel_for(examples.size(), config.workers,
                     [&](size_t i) { slots[i] = run_attack(examples[i], surrogate, ac, wordlist); });
      } catch (const Error&) {
        std::vector<AttackOutcome> done;
        for (auto& s : slots) {
          if (s) done.push_back(std::move(*s));
        }
        save_outcomes(done, to_string(method),
                      config.out_dir / ("outcomes_" + to_string(method) + ".partial.jsonl"), &prov);
        throw;
      }
      std::vector<AttackOutcome> outcomes;
      size_t successes = 0;
      for (auto& s : slots) {
        successes += s->success_on_search_model ? 1 : 0;
        outcomes.push_back(std::move(*s));
      }
      const auto path = outcomes_path(config, method);
      save_outcomes(outcomes, to_string(method), path, &prov);
      written.push_back(path);
      say(log, "attack " + to_string(method) + ": " + std::to_string(successes) + "/" +
                   std::to_string(outcomes.size()) + " succeeded on the surrogate");
    }
  }
  return written;
}

namespace {

std::vector<TransferRecord> run_addsent(const PipelineConfig& config,
                                        std::span<const QAExample> examples,
                                        const SpanModel& victim) {
  AddSentResources res;
  res.lexicon = load_lexicon(config.antonyms);
  res.gazetteers.places = load_entry_list(config.places);
  res.gazetteers.person_names = load_entry_list(config.person_names);
  res.fake_answers = load_fake_answers(config.fake_answers);
  const AddSentGenerator gen(res);

  std::vector<const QAExample*> order;
  for (const auto& ex : examples) order.push_back(&ex);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->id < b->id; });

  const uint64_t base = stage_seed(config.seed, "addsent");
  std::vector<TransferRecord> best(order.size()), one(order.size());
  parallel_for(order.size(), config.workers, [&](size_t i) {
    const QAExample& ex = *order[i];
    Rng rng(mix_seed(base, fnv1a64(ex.id)));
    const auto cands = gen.gen_candidates(ex, rng, config.addsent_candidates);
    auto guarded = [&](auto&& fn, TransferRecord& slot, Method m) {
      try {
        slot = fn();
      } catch (const Error& e) {
        if (!e.is_remote()) throw;
        slot = TransferRecord{};
        slot.example_id = ex.id;
        slot.method = m;
        slot.error = e.what();
      }
    };
    guarded([&] { return select_best(cands, victim, ex, config.attack.placement).record; }, best[i],
            Method::kAddSent);
    const auto pick = select_one(cands, rng);
    guarded([&] {
      return evaluate_candidate(pick ? &cands[*pick] : nullptr, victim, ex, config.attack.placement,
                                Method::kAddOneSent);
    }, one[i], Method::kAddOneSent);
  });
  best.insert(best.end(), one.begin(), one.end());
  return best;
}

std::vector<std::filesystem::path> write_reports(const PipelineConfig& config,
                                                 std::vector<TransferRecord> records,
                                                 std::span<const QAExample> examples) {
  Gazetteers gz;
  if (!config.places.empty()) gz.places = load_entry_list(config.places);
  if (!config.person_names.empty()) gz.person_names = load_entry_list(config.person_names);
  const AnswerCategorizer categorizer(gz);
  const Provenance prov = config.provenance();
  const ReportBundle bundle = build_reports(std::move(records), examples, categorizer);
  return emit_report(bundle, config.format, config.out_dir, &prov);
}

}  // namespace

std::vector<std::filesystem::path> cmd_transfer(const PipelineConfig& config, const LogFn& log) {
  config.validate();
  ensure_out_dir(config);
  const Provenance prov = config.provenance();
  const auto examples = load_squad(config.squad);
  const auto victim = make_victim(config);

  std::vector<TransferRecord> records;
  for (auto scheme : config.schemes) {
    for (auto mode : config.modes) {
      const Method method = addany_method(scheme, mode);
      const auto path = outcomes_path(config, method);
      if (!std::filesystem::exists(path)) {
        throw Error(ErrorKind::kValidation, "missing outcomes " + path.string() + "; run attack first");
      }
      const auto outcomes = load_outcomes(path);
      auto recs = run_transfer(outcomes, *victim, examples, method, config.workers);
      say(log, "transfer " + to_string(method) + ": " + std::to_string(recs.size()) + " records");
      records.insert(records.end(), recs.begin(), recs.end());
    }
  }
  if (config.addsent) {
    auto recs = run_addsent(config, examples, *victim);
    say(log, "transfer ADDSENT/ADDONESENT: " + std::to_string(recs.size()) + " records");
    records.insert(records.end(), recs.begin(), recs.end());
  }
  write_text(records_path(config), serialize_records(records, &prov));
  auto written = write_reports(config, std::move(records), examples);
  written.insert(written.begin(), records_path(config));
  return written;
}

std::vector<std::filesystem::path> cmd_report(const PipelineConfig& config, const LogFn& log) {
  config.validate();
  const auto path = records_path(config);
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorKind::kValidation, "missing " + path.string() + "; run transfer first");
  }
  auto records = parse_records(read_file(path));
  const auto examples = load_squad(config.squad);
  auto written = write_reports(config, std::move(records), examples);
  say(log, "report: wrote " + std::to_string(written.size()) + " files");
  return written;
}

std::vector<std::filesystem::path> cmd_pipeline(const PipelineConfig& config, const LogFn& log) {
  config.validate();
  run_stage("extract", [&] { return cmd_extract(config, log); });
  run_stage("attack", [&] { return cmd_attack(config, log); });
  return run_stage("transfer", [&] { return cmd_transfer(config, log); });
}

}  // namespace qattack
