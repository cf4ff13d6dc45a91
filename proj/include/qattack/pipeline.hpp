#pragma once

// Campaign configuration and the command implementations shared by the C API
// and the command-line tool. Every command reads inputs named by the config
// and writes only under out_dir.

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qattack/addany.hpp"
#include "qattack/campaign.hpp"
#include "qattack/extraction.hpp"
#include "qattack/model.hpp"
#include "qattack/parallel.hpp"
#include "qattack/provenance.hpp"
#include "qattack/reference_models.hpp"

namespace qattack {

inline constexpr std::string_view kBuiltinVictim = "builtin-overlap";
inline constexpr std::string_view kAuthTokenEnv = "QATTACK_AUTH_TOKEN";

struct PipelineConfig {
  // Victim: kBuiltinVictim or an http(s) endpoint URL.
  std::string victim = std::string(kBuiltinVictim);
  double victim_timeout = 30.0;
  size_t victim_max_batch = 16;
  int victim_retries = 3;
  double overlap_temperature = 1.0;

  std::filesystem::path squad;
  std::filesystem::path corpus;
  std::filesystem::path wordlist;
  std::filesystem::path antonyms;
  std::filesystem::path places;
  std::filesystem::path person_names;
  std::filesystem::path fake_answers;

  std::vector<ExtractionScheme> schemes = {ExtractionScheme::kWiki, ExtractionScheme::kRandom};
  size_t budget = 2000;
  size_t min_paragraph_tokens = 40;
  ExtractionConfig extraction;
  TrainingHyper training;

  std::vector<AttackMode> modes = {AttackMode::kKBest, AttackMode::kArgMax};
  AttackConfig attack;
  bool addsent = true;
  size_t addsent_candidates = 10;

  uint64_t seed = 0;
  size_t workers = default_workers();
  std::filesystem::path out_dir = "out";
  ReportFormat format = ReportFormat::kCsv;

  // Canonical "key=value" lines in sorted key order, as written (paths are
  // not resolved). The hash covers every key except out_dir, workers and
  // format, which cannot change report contents.
  std::map<std::string, std::string> canonical;

  std::string config_hash() const;
  Provenance provenance() const { return {config_hash(), seed}; }

  // Checks values and that every referenced input file exists.
  void validate() const;
};

// Parses "key = value" lines; '#' starts a comment line. Relative paths are
// resolved against `base_dir`.
PipelineConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);

// Applies one setting by key, as the config file would. Used for flag
// overrides.
void set_config_value(PipelineConfig& config, const std::string& key, const std::string& value,
                      const std::filesystem::path& base_dir = {});

// Hash of a canonical key map; see PipelineConfig::canonical.
std::string hash_canonical(const std::map<std::string, std::string>& canonical);

std::unique_ptr<SpanModel> make_victim(const PipelineConfig& config);

using LogFn = std::function<void(const std::string&)>;

struct SchemeSummary {
  ExtractionScheme scheme = ExtractionScheme::kWiki;
  size_t examples = 0;
  size_t queries_spent = 0;
  double heldout_agreement = 0.0;   // fraction
  double baseline_agreement = 0.0;  // zero-weight surrogate, fraction
  double final_loss = 0.0;
};

Method addany_method(ExtractionScheme scheme, AttackMode mode);

std::filesystem::path dataset_path(const PipelineConfig& c, ExtractionScheme s);
std::filesystem::path surrogate_path(const PipelineConfig& c, ExtractionScheme s);
std::filesystem::path outcomes_path(const PipelineConfig& c, Method m);
std::filesystem::path records_path(const PipelineConfig& c);

// Builds the extraction datasets, trains one surrogate per scheme and writes
// extraction_summary.json.
std::vector<SchemeSummary> cmd_extract(const PipelineConfig& config, const LogFn& log = {});

// Attacks each surrogate found under out_dir in every configured mode.
std::vector<std::filesystem::path> cmd_attack(const PipelineConfig& config, const LogFn& log = {});

// Transfers every outcomes file to the victim, runs the AddSent baselines,
// writes transfer_records.jsonl and the reports.
std::vector<std::filesystem::path> cmd_transfer(const PipelineConfig& config, const LogFn& log = {});

// Rebuilds the reports from transfer_records.jsonl.
std::vector<std::filesystem::path> cmd_report(const PipelineConfig& config, const LogFn& log = {});

std::vector<std::filesystem::path> cmd_pipeline(const PipelineConfig& config, const LogFn& log = {});

}  // namespace qattack
