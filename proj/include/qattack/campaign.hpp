#pragma once

// Transfer evaluation and the report tables built from it: per-method
// aggregates, per-category breakdowns and joint coverage of two methods.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "qattack/addany.hpp"
#include "qattack/categories.hpp"
#include "qattack/corpus.hpp"
#include "qattack/model.hpp"
#include "qattack/provenance.hpp"

namespace qattack {

enum class Method { kWikiKBest, kWikiArgMax, kRandomKBest, kRandomArgMax, kAddSent, kAddOneSent };

std::string to_string(Method method);  // "W-A-KBEST", ..., "ADDONESENT"
Method parse_method(std::string_view name);

struct TransferRecord {
  std::string example_id;
  Method method = Method::kWikiKBest;
  double f1_before = 0.0;
  double f1_after = 0.0;
  bool em_after = false;
  std::string adversary;
  std::optional<double> search_f1;  // F1 on the model the attack searched against
  std::string error;                // nonempty when the victim failed on this record
  bool attack_failed = false;       // no adversary could be generated

  bool ok() const { return error.empty(); }
};

// Victim top-1 F1 before and after each outcome's perturbation. Outcomes are
// matched to examples by id; records come back sorted by example id.
std::vector<TransferRecord> run_transfer(std::span<const AttackOutcome> outcomes,
                                         const SpanModel& victim,
                                         std::span<const QAExample> examples, Method method,
                                         size_t workers = 1);

// Adversary tokens joined with single spaces, as stored in records.
std::string detokenize_adversary(std::span<const std::string> tokens);

struct AggregateRow {
  Method method = Method::kWikiKBest;
  size_t count = 0;   // records, including failed ones
  size_t errors = 0;  // percentages below average the rest
  std::optional<double> search_f1;  // percent
  double f1_before = 0.0;           // percent
  double f1_after = 0.0;            // percent
  double em_after = 0.0;            // percent
};

std::vector<AggregateRow> aggregate_by_method(std::span<const TransferRecord> records);

struct CategoryRow {
  std::string category;  // category name or "Total"
  size_t count = 0;
  double frequency = 0.0;  // percent of records
  double f1_before = 0.0;  // percent
  double f1_after = 0.0;   // percent
  double average_length = 0.0;
};

// Rows for all ten categories (zero-count rows included) followed by a Total
// row. `records` must all belong to one method.
std::vector<CategoryRow> category_report(std::span<const TransferRecord> records,
                                         std::span<const QAExample> examples,
                                         const AnswerCategorizer& categorizer);

struct CoverageReport {
  size_t only_a = 0;
  size_t only_b = 0;
  size_t both = 0;
  size_t neither = 0;
  double combined_f1 = 0.0;  // percent; mean over examples of min(f1_a, f1_b)
};

// An example is covered by a method when its f1_after is exactly 0. Both
// sets must name the same examples; pairs with a victim error are left out.
CoverageReport coverage(std::span<const TransferRecord> records_a,
                        std::span<const TransferRecord> records_b);

enum class ReportFormat { kCsv, kJson };
ReportFormat parse_report_format(std::string_view name);

struct CoverageRow {
  Method method_a = Method::kWikiKBest;
  Method method_b = Method::kAddSent;
  CoverageReport report;
};

struct MethodCategories {
  Method method = Method::kWikiKBest;
  std::vector<CategoryRow> rows;
};

struct ReportBundle {
  std::vector<TransferRecord> records;
  std::vector<AggregateRow> aggregate;
  std::vector<MethodCategories> categories;
  std::vector<CoverageRow> coverage;
};

ReportBundle build_reports(std::vector<TransferRecord> records,
                           std::span<const QAExample> examples,
                           const AnswerCategorizer& categorizer);

// Writes transfer_records, aggregate, categories and coverage files with the
// format's extension. Returns the paths written.
std::vector<std::filesystem::path> emit_report(const ReportBundle& bundle, ReportFormat format,
                                               const std::filesystem::path& out_dir,
                                               const Provenance* provenance = nullptr);

// Line-delimited record persistence used between the transfer and report
// commands.
std::string serialize_records(std::span<const TransferRecord> records,
                              const Provenance* provenance = nullptr);
std::vector<TransferRecord> parse_records(std::string_view text);

}  // namespace qattack
