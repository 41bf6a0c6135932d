#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "numlab/eval.hpp"

namespace numlab {

struct ReportCell {
  // Percent, rounded to 2 decimals.
  double accuracy = 0.0;
  // Counts are not part of the CSV form; zero after a CSV parse.
  std::size_t correct = 0;
  std::size_t evaluated = 0;
};

struct ReportRow {
  std::string label;
  // Keyed by task column ("2D+", ...). Missing key = task not run.
  std::map<std::string, ReportCell> cells;
};

// One row per approach or model, nine task columns.
class EvalReport {
 public:
  const std::vector<ReportRow>& rows() const { return rows_; }
  bool empty() const { return rows_.empty(); }

  // Merges the result's task tallies into the row (created on first use).
  // Re-adding a task to a row accumulates its counts.
  void add(const std::string& label, const EvalResult& result);
  void set(const std::string& label, const std::string& task, TaskTally tally);
  // Accuracy is rounded to 2 decimals.
  void set_cell(const std::string& label, const std::string& task, ReportCell cell);
  const ReportRow* find(std::string_view label) const;

  std::string to_text() const;
  std::string to_csv() const;
  std::string to_html() const;
  // Throws ParseError on a wrong header, unknown column or bad number.
  static EvalReport parse_csv(std::string_view csv);

  // Labels and accuracies only; counts are ignored.
  bool same_accuracies(const EvalReport& other) const;

 private:
  ReportRow& row(const std::string& label);
  std::vector<ReportRow> rows_;
};

enum class ReportFormat { kText, kCsv, kHtml };
ReportFormat parse_report_format(std::string_view s);
std::string render_report(const EvalReport& report, ReportFormat format);
void emit_report(const EvalReport& report, ReportFormat format, const std::filesystem::path& path);

// Cell-wise b - a for rows present in both reports (matched by label) and
// cells present in both rows. Rows only in one report are listed as such.
struct ReportDelta {
  std::vector<ReportRow> rows;  // accuracy holds the delta
  std::vector<std::string> only_in_a;
  std::vector<std::string> only_in_b;
};
ReportDelta compare_reports(const EvalReport& a, const EvalReport& b);
// Same header as the report CSV; cells are signed ("+1.25", "-0.50").
std::string delta_csv(const ReportDelta& delta);
std::string delta_text(const ReportDelta& delta);

// "%.2f" without locale surprises.
std::string format_percent(double value);

}  // namespace numlab
