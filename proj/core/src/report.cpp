#include "numlab/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>

#include "numlab/error.hpp"
#include "numlab/io.hpp"

namespace numlab {

namespace {

constexpr std::string_view kLabelHeader = "Approach";

double round2(double v) {
  const double r = std::round(v * 100.0) / 100.0;
  return r == 0.0 ? 0.0 : r;  // no negative zero
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"' && cur.empty()) {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw ParseError("report csv line " + std::to_string(line_no) + ": unterminated quote", line.size());
  fields.push_back(std::move(cur));
  return fields;
}

std::string html_escape(std::string_view s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string signed_percent(double v) {
  const auto s = format_percent(v);
  return s.front() == '-' ? s : "+" + s;
}

std::string header_csv() {
  std::string out(kLabelHeader);
  for (const auto& c : task_columns()) out += "," + c;
  return out + "\n";
}

std::string aligned_table(const std::vector<ReportRow>& rows, const std::function<std::string(const ReportCell&)>& fmt) {
  std::size_t label_w = kLabelHeader.size();
  for (const auto& r : rows) label_w = std::max(label_w, r.label.size());
  constexpr std::size_t kCellW = 8;
  auto pad_right = [](std::string s, std::size_t w) { return s + std::string(w > s.size() ? w - s.size() : 0, ' '); };
  auto pad_left = [](std::string s, std::size_t w) { return std::string(w > s.size() ? w - s.size() : 0, ' ') + s; };

  std::string out = pad_right(std::string(kLabelHeader), label_w);
  for (const auto& c : task_columns()) out += " " + pad_left(c, kCellW);
  out += "\n" + std::string(label_w + (kCellW + 1) * task_columns().size(), '-') + "\n";
  for (const auto& r : rows) {
    out += pad_right(r.label, label_w);
    for (const auto& c : task_columns()) {
      const auto it = r.cells.find(c);
      out += " " + pad_left(it == r.cells.end() ? "-" : fmt(it->second), kCellW);
    }
    out += "\n";
  }
  return out;
}

}  // namespace

std::string format_percent(double value) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, round2(value), std::chars_format::fixed, 2);
  if (ec != std::errc{}) throw Error("cannot format " + std::to_string(value));
  return std::string(buf, p);
}

ReportRow& EvalReport::row(const std::string& label) {
  for (auto& r : rows_) {
    if (r.label == label) return r;
  }
  rows_.push_back({label, {}});
  return rows_.back();
}

const ReportRow* EvalReport::find(std::string_view label) const {
  for (const auto& r : rows_) {
    if (r.label == label) return &r;
  }
  return nullptr;
}

void EvalReport::set(const std::string& label, const std::string& task, TaskTally tally) {
  set_cell(label, task, {tally.accuracy(), tally.correct, tally.evaluated});
}

void EvalReport::set_cell(const std::string& label, const std::string& task, ReportCell cell) {
  if (std::find(task_columns().begin(), task_columns().end(), task) == task_columns().end()) {
    throw ValidationError("task '" + task + "' is not a report column");
  }
  cell.accuracy = round2(cell.accuracy);
  row(label).cells[task] = cell;
}

void EvalReport::add(const std::string& label, const EvalResult& result) {
  auto& r = row(label);
  for (const auto& [task, tally] : result.tasks) {
    TaskTally merged = tally;
    if (const auto it = r.cells.find(task); it != r.cells.end()) {
      merged.correct += it->second.correct;
      merged.evaluated += it->second.evaluated;
    }
    set(label, task, merged);
  }
}

std::string EvalReport::to_text() const {
  return aligned_table(rows_, [](const ReportCell& c) { return format_percent(c.accuracy); });
}

std::string EvalReport::to_csv() const {
  std::string out = header_csv();
  for (const auto& r : rows_) {
    out += csv_field(r.label);
    for (const auto& c : task_columns()) {
      out += ",";
      if (const auto it = r.cells.find(c); it != r.cells.end()) out += format_percent(it->second.accuracy);
    }
    out += "\n";
  }
  return out;
}

std::string EvalReport::to_html() const {
  std::string out =
      "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Accuracy</title>\n"
      "<style>table{border-collapse:collapse;font-family:monospace}"
      "td,th{border:1px solid #999;padding:4px 8px;text-align:right}td:first-child{text-align:left}</style>\n"
      "</head><body>\n<table>\n<tr><th>Approach</th>";
  for (const auto& c : task_columns()) out += "<th>" + html_escape(c) + "</th>";
  out += "</tr>\n";
  for (const auto& r : rows_) {
    out += "<tr><td>" + html_escape(r.label) + "</td>";
    for (const auto& c : task_columns()) {
      const auto it = r.cells.find(c);
      if (it == r.cells.end()) {
        out += "<td>-</td>";
      } else {
        out += "<td title=\"" + std::to_string(it->second.correct) + "/" + std::to_string(it->second.evaluated) +
               "\">" + format_percent(it->second.accuracy) + "</td>";
      }
    }
    out += "</tr>\n";
  }
  return out + "</table>\n</body></html>\n";
}

EvalReport EvalReport::parse_csv(std::string_view csv) {
  EvalReport report;
  std::size_t line_no = 0;
  bool header_seen = false;
  for (std::size_t start = 0; start < csv.size();) {
    auto end = csv.find('\n', start);
    if (end == std::string_view::npos) end = csv.size();
    auto line = csv.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto fields = split_csv_line(line, line_no);
    if (!header_seen) {
      std::vector<std::string> expected{std::string(kLabelHeader)};
      expected.insert(expected.end(), task_columns().begin(), task_columns().end());
      if (fields != expected) throw ParseError("report csv: header must be '" + header_csv().substr(0, header_csv().size() - 1) + "'", 0);
      header_seen = true;
      continue;
    }
    if (fields.size() != task_columns().size() + 1) {
      throw ParseError("report csv line " + std::to_string(line_no) + ": expected " +
                           std::to_string(task_columns().size() + 1) + " fields",
                       0);
    }
    auto& r = report.row(fields[0]);
    for (std::size_t i = 0; i < task_columns().size(); ++i) {
      const auto& f = fields[i + 1];
      if (f.empty()) continue;
      double v = 0;
      const auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc{} || p != f.data() + f.size() || !std::isfinite(v)) {
        throw ParseError("report csv line " + std::to_string(line_no) + ": bad number '" + f + "'", 0);
      }
      r.cells[task_columns()[i]] = {round2(v), 0, 0};
    }
  }
  if (!header_seen) throw ParseError("report csv: missing header", 0);
  return report;
}

bool EvalReport::same_accuracies(const EvalReport& other) const {
  if (rows_.size() != other.rows_.size()) return false;
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    const auto& a = rows_[i];
    const auto& b = other.rows_[i];
    if (a.label != b.label || a.cells.size() != b.cells.size()) return false;
    for (const auto& [task, cell] : a.cells) {
      const auto it = b.cells.find(task);
      if (it == b.cells.end() || it->second.accuracy != cell.accuracy) return false;
    }
  }
  return true;
}

ReportFormat parse_report_format(std::string_view s) {
  if (s == "text" || s == "txt") return ReportFormat::kText;
  if (s == "csv") return ReportFormat::kCsv;
  if (s == "html") return ReportFormat::kHtml;
  throw ValidationError("unknown report format '" + std::string(s) + "' (expected text, csv or html)");
}

std::string render_report(const EvalReport& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::kText: return report.to_text();
    case ReportFormat::kCsv: return report.to_csv();
    case ReportFormat::kHtml: return report.to_html();
  }
  return {};
}

void emit_report(const EvalReport& report, ReportFormat format, const std::filesystem::path& path) {
  write_file_atomic(path, render_report(report, format));
}

ReportDelta compare_reports(const EvalReport& a, const EvalReport& b) {
  ReportDelta d;
  for (const auto& ra : a.rows()) {
    const auto* rb = b.find(ra.label);
    if (!rb) {
      d.only_in_a.push_back(ra.label);
      continue;
    }
    ReportRow row{ra.label, {}};
    for (const auto& [task, ca] : ra.cells) {
      if (const auto it = rb->cells.find(task); it != rb->cells.end()) {
        row.cells[task] = {round2(it->second.accuracy - ca.accuracy), 0, 0};
      }
    }
    d.rows.push_back(std::move(row));
  }
  for (const auto& rb : b.rows()) {
    if (!a.find(rb.label)) d.only_in_b.push_back(rb.label);
  }
  return d;
}

std::string delta_csv(const ReportDelta& delta) {
  std::string out = header_csv();
  for (const auto& r : delta.rows) {
    out += csv_field(r.label);
    for (const auto& c : task_columns()) {
      out += ",";
      if (const auto it = r.cells.find(c); it != r.cells.end()) out += signed_percent(it->second.accuracy);
    }
    out += "\n";
  }
  return out;
}

std::string delta_text(const ReportDelta& delta) {
  std::string out = aligned_table(delta.rows, [](const ReportCell& c) { return signed_percent(c.accuracy); });
  for (const auto& l : delta.only_in_a) out += "only in first report: " + l + "\n";
  for (const auto& l : delta.only_in_b) out += "only in second report: " + l + "\n";
  return out;
}

}  // namespace numlab
