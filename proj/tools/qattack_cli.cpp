// Command-line front end. Links only the C interface.

#include <cstdio>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qattack/qattack.h"

namespace {

int exit_code(qat_status s) {
  if (s == QAT_OK) return 0;
  if (s == QAT_ERR_VALIDATION || s == QAT_ERR_PARSE || s == QAT_ERR_ARGUMENT) return 1;
  if (qat_status_is_remote(s)) return 3;
  return 2;
}

int report(qat_status s, const char* what) {
  if (s != QAT_OK) {
    std::fprintf(stderr, "qattack: %s: %s (%s)\n", what, qat_last_error(), qat_status_name(s));
  }
  return exit_code(s);
}

void log_line(const char* message, void*) { std::fprintf(stderr, "%s\n", message); }

struct ConfigDeleter {
  void operator()(qat_config* c) const { qat_config_free(c); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Black-box adversarial attacks on extractive question answering models"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> seed, workers, victim, out_dir, format;
  app.add_option("--config", config_path, "Campaign config file")->required();
  app.add_option("--seed", seed, "Override the config seed");
  app.add_option("--workers", workers, "Example-level parallelism (default: processor count)");
  app.add_option("--victim", victim, "builtin-overlap or an endpoint URL");
  app.add_option("--out-dir", out_dir, "Output directory");
  app.add_option("--format", format, "Report format: csv or json");

  const std::pair<const char*, qat_command> commands[] = {
      {"extract", QAT_CMD_EXTRACT},   {"attack", QAT_CMD_ATTACK},
      {"transfer", QAT_CMD_TRANSFER}, {"report", QAT_CMD_REPORT},
      {"pipeline", QAT_CMD_PIPELINE},
  };
  const char* help[] = {
      "Build extraction datasets and train surrogates",
      "Attack the surrogates with AddAny",
      "Transfer adversaries to the victim and run AddSent baselines",
      "Rebuild reports from transfer records",
      "Run extract, attack and transfer",
  };
  std::vector<CLI::App*> subs;
  for (size_t i = 0; i < std::size(commands); ++i) {
    subs.push_back(app.add_subcommand(commands[i].first, help[i]));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  qat_config* raw = nullptr;
  if (qat_status s = qat_config_load(config_path.c_str(), &raw); s != QAT_OK) {
    return report(s, "loading config");
  }
  std::unique_ptr<qat_config, ConfigDeleter> config(raw);

  const std::pair<const char*, const std::optional<std::string>*> overrides[] = {
      {"seed", &seed},        {"workers", &workers}, {"victim", &victim},
      {"out_dir", &out_dir}, {"format", &format}};
  for (const auto& [key, value] : overrides) {
    if (!*value) continue;
    if (qat_status s = qat_config_set(config.get(), key, (*value)->c_str()); s != QAT_OK) {
      return report(s, (std::string("--") + key).c_str());
    }
  }

  for (size_t i = 0; i < subs.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    return report(qat_run(config.get(), commands[i].second, log_line, nullptr), commands[i].first);
  }
  return 1;
}
