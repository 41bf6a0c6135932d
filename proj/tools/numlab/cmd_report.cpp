#include <ostream>

#include "commands.hpp"
#include "numlab/error.hpp"
#include "numlab/io.hpp"
#include "numlab/report.hpp"
#include "util.hpp"

namespace numlab::cli {

void ReportOptions::add_to(CLI::App& app) {
  app.add_option("inputs", inputs, "Report CSV files to merge (later files win on shared cells)");
  app.add_option("--compare", compare, "Two report CSVs; emits second minus first per cell")->expected(2);
  app.add_option("--format", format, "text, csv or html")->check(CLI::IsMember({"text", "csv", "html"}));
  app.add_option("--output", output, "Write to this file instead of stdout");
}

namespace {

EvalReport load_report(const std::string& path) {
  require_file(path, "numlab eval");
  return EvalReport::parse_csv(read_file(path));
}

}  // namespace

void ReportOptions::run(const Context& ctx) const {
  std::string text;
  if (!compare.empty()) {
    const auto delta = compare_reports(load_report(compare[0]), load_report(compare[1]));
    if (format == "html") throw ValidationError("--compare supports text and csv");
    text = format == "csv" ? delta_csv(delta) : delta_text(delta);
  } else {
    if (inputs.empty()) throw ValidationError("report needs input CSV files or --compare A B");
    EvalReport merged;
    for (const auto& in : inputs) {
      const auto loaded = load_report(in);
      for (const auto& row : loaded.rows()) {
        for (const auto& [task, cell] : row.cells) merged.set_cell(row.label, task, cell);
      }
    }
    text = render_report(merged, parse_report_format(format));
  }
  if (output.empty()) {
    ctx.out << text;
  } else {
    write_file_atomic(output, text);
  }
}

}  // namespace numlab::cli
