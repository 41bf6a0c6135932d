#include "numlab/saliency.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "numlab/error.hpp"

namespace numlab {

namespace {

std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string visible(std::string_view token) {
  std::string out;
  for (const char c : token) out += c == ' ' ? std::string("\xc2\xb7") : std::string(1, c);
  return out;
}

std::string html_escape(std::string_view s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case ' ': out += "&nbsp;"; break;
      default: out += c;
    }
  }
  return out;
}

std::size_t token_at(const std::vector<std::size_t>& starts, std::size_t offset) {
  const auto it = std::upper_bound(starts.begin(), starts.end(), offset);
  return static_cast<std::size_t>(it - starts.begin()) - 1;
}

}  // namespace

bool is_digit_token(std::string_view token) {
  const auto first = token.find_first_not_of(' ');
  if (first == std::string_view::npos) return false;
  return std::all_of(token.begin() + static_cast<std::ptrdiff_t>(first), token.end(),
                     [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; });
}

template <typename Scalar>
SaliencyReport saliency_report(const Transformer<Scalar>& model, const Tokenizer& tokenizer, const std::string& prompt,
                               const std::vector<std::size_t>& generated_indices, std::size_t max_new_tokens) {
  SaliencyReport report;
  report.prompt = prompt;
  const auto prompt_ids = tokenizer.encode(prompt);
  report.prompt_tokens = prompt_ids.size();
  report.ids = greedy_decode_ids(model, prompt_ids, max_new_tokens, tokenizer);
  const std::size_t generated = report.ids.size() - 1 - prompt_ids.size();
  report.continuation = tokenizer.decode(std::span<const TokenId>(report.ids).subspan(1 + prompt_ids.size()));

  for (const auto k : generated_indices) {
    if (k >= generated) {
      throw ValidationError("generated token index " + std::to_string(k) + " out of range (generated " +
                            std::to_string(generated) + " tokens)");
    }
    SaliencyPanel panel;
    panel.generated_index = k;
    panel.position = 1 + prompt_ids.size() + k;
    panel.target = tokenizer.token(report.ids[panel.position]);
    panel.scores = model.saliency(report.ids, panel.position, 1);
    for (std::size_t i = 1; i < panel.position; ++i) panel.tokens.push_back(tokenizer.token(report.ids[i]));
    report.panels.push_back(std::move(panel));
  }
  return report;
}

template SaliencyReport saliency_report<float>(const Transformer<float>&, const Tokenizer&, const std::string&,
                                               const std::vector<std::size_t>&, std::size_t);
template SaliencyReport saliency_report<double>(const Transformer<double>&, const Tokenizer&, const std::string&,
                                                const std::vector<std::size_t>&, std::size_t);

std::string saliency_text(const SaliencyReport& report) {
  std::string out = "prompt: " + report.prompt + "\ncontinuation:" + report.continuation + "\n";
  constexpr int kBarWidth = 20;
  for (const auto& p : report.panels) {
    out += "\n== generated token " + std::to_string(p.generated_index) + " [" + visible(p.target) + "] ==\n";
    std::size_t w = 5;
    for (const auto& t : p.tokens) w = std::max(w, visible(t).size());
    const double top = p.scores.empty() ? 0.0 : *std::max_element(p.scores.begin(), p.scores.end());
    for (std::size_t i = 0; i < p.tokens.size(); ++i) {
      const auto v = visible(p.tokens[i]);
      const int bar = top > 0 ? static_cast<int>(std::lround(kBarWidth * p.scores[i] / top)) : 0;
      out += v + std::string(w - v.size() + 1, ' ') + fixed6(p.scores[i]) + " " + std::string(static_cast<std::size_t>(bar), '#') + "\n";
    }
    out += visible(p.target) + std::string(w > visible(p.target).size() ? w - visible(p.target).size() + 1 : 1, ' ') +
           "<- target\n";
  }
  return out;
}

std::string saliency_html(const SaliencyReport& report) {
  std::string out =
      "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Saliency</title>\n"
      "<style>body{font-family:monospace}.tok{display:inline-block;padding:2px 1px;margin:1px}"
      ".target{background:#a56de2;color:#fff}.panel{margin:1em 0}</style>\n</head><body>\n";
  out += "<p>prompt: " + html_escape(report.prompt) + "</p>\n";
  for (const auto& p : report.panels) {
    out += "<div class=\"panel\"><h3>generated token " + std::to_string(p.generated_index) + "</h3>\n";
    const double top = p.scores.empty() ? 0.0 : *std::max_element(p.scores.begin(), p.scores.end());
    for (std::size_t i = 0; i < p.tokens.size(); ++i) {
      const double a = top > 0 ? p.scores[i] / top : 0.0;
      char style[64];
      std::snprintf(style, sizeof style, "background:rgba(255,140,0,%.3f)", a);
      out += "<span class=\"tok\" style=\"" + std::string(style) + "\" title=\"" + fixed6(p.scores[i]) + "\">" +
             html_escape(p.tokens[i]) + "</span>";
    }
    out += "<span class=\"tok target\">" + html_escape(p.target) + "</span>\n</div>\n";
  }
  return out + "</body></html>\n";
}

std::optional<UnitsDigitTokens> find_units_digit_tokens(const Tokenizer& tokenizer, const std::vector<TokenId>& ids) {
  std::string text;
  std::vector<std::size_t> starts;
  for (const auto id : ids) {
    starts.push_back(text.size());
    if (!tokenizer.is_special(id)) text += tokenizer.token(id);
  }
  auto is_digit = [&](std::size_t at) { return at < text.size() && text[at] >= '0' && text[at] <= '9'; };
  auto first_digit = [&](std::size_t from) { return text.find_first_of("0123456789", from); };
  auto last_of_run = [&](std::size_t at) {
    while (is_digit(at + 1)) ++at;
    return at;
  };
  const auto sum = text.find("Sum ");
  if (sum == std::string::npos) return std::nullopt;
  std::size_t op = std::string::npos;
  for (const std::string_view sym : {" + ", " - ", " x "}) op = std::min(op, text.find(sym, sum));
  if (op == std::string::npos) return std::nullopt;
  const auto eq = text.find(" = ", op);
  if (eq == std::string::npos) return std::nullopt;
  const auto d1 = first_digit(sum), d2 = first_digit(op), d3 = first_digit(eq);
  if (d1 == std::string::npos || d1 > op || d2 == std::string::npos || d2 > eq || d3 == std::string::npos) {
    return std::nullopt;
  }
  UnitsDigitTokens u{token_at(starts, d1), token_at(starts, d2), token_at(starts, d3), {}, {}};
  // Digits fused with other text cannot be attributed to one place.
  for (const auto i : {u.operand1, u.operand2, u.result}) {
    if (!is_digit_token(tokenizer.token(ids[i]))) return std::nullopt;
  }

  std::vector<std::size_t> chars1, chars2;
  std::size_t word = std::string::npos, word_len = 0;
  for (const std::string_view w : {" plus ", " minus ", " times "}) {
    const auto at = text.find(w);
    if (at < word && at < sum) {
      word = at;
      word_len = w.size();
    }
  }
  if (word != std::string::npos && is_digit(word - 1)) {
    chars1.push_back(word - 1);
    if (is_digit(word + word_len)) chars2.push_back(last_of_run(word + word_len));
  }
  constexpr std::string_view kTranslate = "to decomposition: ";
  std::size_t from = 0;
  for (auto* chars : {&chars1, &chars2}) {
    const auto at = text.find(kTranslate, from);
    if (at == std::string::npos || at > sum) break;
    const auto num = at + kTranslate.size();
    if (!is_digit(num)) break;
    const auto units = last_of_run(num);
    chars->push_back(units);
    if (text.compare(units + 1, 3, " = ") == 0 && is_digit(units + 4)) chars->push_back(units + 4);
    from = num;
  }
  chars1.push_back(d1);
  chars2.push_back(d2);
  auto to_tokens = [&](const std::vector<std::size_t>& chars) {
    std::vector<std::size_t> out;
    for (const auto c : chars) {
      const auto t = token_at(starts, c);
      if (is_digit_token(tokenizer.token(ids[t])) && std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
    }
    return out;
  };
  u.operand1_all = to_tokens(chars1);
  u.operand2_all = to_tokens(chars2);
  return u;
}

template <typename Scalar>
UnitsProbe probe_units_saliency(const Transformer<Scalar>& model, const Tokenizer& tokenizer, const std::string& prompt,
                                std::size_t max_new_tokens) {
  UnitsProbe probe;
  const auto prompt_ids = tokenizer.encode(prompt);
  const auto ids = greedy_decode_ids(model, prompt_ids, max_new_tokens, tokenizer);
  const auto loc = find_units_digit_tokens(tokenizer, ids);
  if (!loc || loc->result <= prompt_ids.size()) return probe;
  probe.located = true;

  const auto scores = model.saliency(ids, loc->result, 1);
  std::vector<std::size_t> digits;
  for (std::size_t i = 1; i < loc->result; ++i) {
    if (is_digit_token(tokenizer.token(ids[i]))) digits.push_back(i);
  }
  // Stable ordering: higher score first, earlier position on ties.
  std::stable_sort(digits.begin(), digits.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a - 1] > scores[b - 1]; });
  auto rank_of = [&](std::size_t pos) {
    return static_cast<int>(std::find(digits.begin(), digits.end(), pos) - digits.begin());
  };
  auto best = [&](const std::vector<std::size_t>& positions) {
    int r = static_cast<int>(digits.size());
    for (const auto p : positions) r = std::min(r, rank_of(p));
    return r;
  };
  const int n = static_cast<int>(digits.size());
  const int r1 = best(loc->operand1_all), r2 = best(loc->operand2_all);
  probe.rank_operand1 = r1 < n ? r1 : -1;
  probe.rank_operand2 = r2 < n ? r2 : -1;
  probe.hit = r1 < 3 && r2 < 3;
  probe.sum_line_hit = rank_of(loc->operand1) < 3 && rank_of(loc->operand2) < 3;
  return probe;
}

template UnitsProbe probe_units_saliency<float>(const Transformer<float>&, const Tokenizer&, const std::string&,
                                                std::size_t);
template UnitsProbe probe_units_saliency<double>(const Transformer<double>&, const Tokenizer&, const std::string&,
                                                 std::size_t);

}  // namespace numlab
