#include "numlab/arith_format.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdlib>

#include "numlab/error.hpp"

namespace numlab {

namespace {

constexpr std::array<std::string_view, kMaxPlaces> kPlaceLabels = {
    "units", "tens", "hundreds", "thousands", "tens of thousands", "hundreds of thousands",
};

void check_range(std::int64_t n) {
  if (n <= -kMaxMagnitude || n >= kMaxMagnitude) {
    throw RangeError("value " + std::to_string(n) + " outside supported range (|n| < 10^6)");
  }
}

// Sequential reader used by every grammar below.
class Cursor {
 public:
  explicit Cursor(std::string_view text) : text_(text) {}

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == text_.size(); }
  std::string_view rest() const { return text_.substr(pos_); }

  bool try_consume(std::string_view lit) {
    if (rest().starts_with(lit)) {
      pos_ += lit.size();
      return true;
    }
    return false;
  }

  void expect(std::string_view lit) {
    if (!try_consume(lit)) fail("expected \"" + std::string(lit) + "\"");
  }

  bool peek_digit(std::size_t offset = 0) const {
    return pos_ + offset < text_.size() && text_[pos_ + offset] >= '0' && text_[pos_ + offset] <= '9';
  }

  int digit() {
    if (!peek_digit()) fail("expected digit");
    return text_[pos_++] - '0';
  }

  std::int64_t integer() {
    const std::size_t start = pos_;
    if (text_.substr(pos_).starts_with('-')) ++pos_;
    if (!peek_digit()) {
      pos_ = start;
      fail("expected integer");
    }
    while (peek_digit()) ++pos_;
    std::int64_t value = 0;
    const auto* first = text_.data() + start;
    const auto [ptr, ec] = std::from_chars(first, text_.data() + pos_, value);
    if (ec != std::errc{}) {
      pos_ = start;
      fail("integer out of range");
    }
    return value;
  }

  std::string_view word() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && text_[pos_] >= 'a' && text_[pos_] <= 'z') ++pos_;
    if (pos_ == start) fail("expected word");
    return text_.substr(start, pos_ - start);
  }

  void expect_end() {
    if (!done()) fail("unexpected trailing text");
  }

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, pos_); }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

std::optional<PlaceName> read_place(Cursor& cur) {
  // Longest labels first: "tens of thousands" must win over "tens".
  static constexpr std::array<int, kMaxPlaces> kByLength = {5, 4, 3, 2, 1, 0};
  for (int idx : kByLength) {
    if (cur.try_consume(kPlaceLabels[static_cast<std::size_t>(idx)])) return PlaceName{idx};
  }
  return std::nullopt;
}

DecomposedNumber read_decomposition(Cursor& cur) {
  const std::size_t start = cur.pos();
  DecomposedNumber out;
  out.negative = cur.try_consume("minus ");

  std::vector<std::pair<int, int>> terms;  // (place, digit)
  for (;;) {
    const int d = cur.digit();
    cur.expect(" ");
    const auto place = read_place(cur);
    if (!place) cur.fail("unknown place label");
    terms.emplace_back(place->index, d);
    // Another term follows only if ", <digit>" comes next.
    if (cur.rest().starts_with(", ") && cur.rest().size() > 2 && cur.rest()[2] >= '0' && cur.rest()[2] <= '9') {
      cur.expect(", ");
      continue;
    }
    break;
  }

  const auto n = terms.size();
  const bool ascending = terms.front().first == 0;
  out.digits.assign(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    const int expected_place = ascending ? static_cast<int>(i) : static_cast<int>(n - 1 - i);
    const int place = terms[i].first;
    if (place != expected_place) {
      if (place < static_cast<int>(n) && out.digits[static_cast<std::size_t>(place)] >= 0) {
        throw ParseError("duplicate place \"" + std::string(kPlaceLabels[static_cast<std::size_t>(place)]) + "\"",
                         start);
      }
      throw ParseError("places must be consecutive from units", start);
    }
    out.digits[static_cast<std::size_t>(place)] = terms[i].second;
  }
  if (n > 1 && out.digits.back() == 0) throw ParseError("leading zero place in decomposition", start);
  if (out.negative && n == 1 && out.digits[0] == 0) throw ParseError("negative zero", start);
  return out;
}

std::int64_t read_spaced(Cursor& cur) {
  const bool negative = cur.try_consume("-");
  std::int64_t magnitude = cur.digit();
  std::size_t count = 1;
  while (cur.rest().size() >= 2 && cur.rest()[0] == ' ' && cur.peek_digit(1)) {
    cur.expect(" ");
    magnitude = magnitude * 10 + cur.digit();
    if (++count > 18) cur.fail("too many digits");
  }
  return negative ? -magnitude : magnitude;
}

Operation read_operation_word(Cursor& cur) {
  const auto w = cur.word();
  const auto op = Operation::from_word(w);
  if (!op) cur.fail("unknown operation word \"" + std::string(w) + "\"");
  return *op;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string with_operands(std::string_view head, std::int64_t n1, std::int64_t n2, Operation op) {
  std::string s(head);
  s += std::to_string(n1);
  s += ' ';
  s += op.word();
  s += ' ';
  s += std::to_string(n2);
  return s;
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

}  // namespace

// ---------------------------------------------------------------- PlaceName

PlaceName PlaceName::at(int index) {
  if (index < 0 || index >= kMaxPlaces) {
    throw RangeError("place index " + std::to_string(index) + " has no name (supported: 0..5)");
  }
  return PlaceName{index};
}

std::optional<PlaceName> PlaceName::from_label(std::string_view label) {
  for (int i = 0; i < kMaxPlaces; ++i) {
    if (kPlaceLabels[static_cast<std::size_t>(i)] == label) return PlaceName{i};
  }
  return std::nullopt;
}

std::string_view PlaceName::label() const { return kPlaceLabels.at(static_cast<std::size_t>(index)); }

// ---------------------------------------------------------------- Operation

const std::vector<Operation>& Operation::all() {
  static const std::vector<Operation> ops = {add(), sub(), mul()};
  return ops;
}

std::string_view Operation::word() const {
  switch (kind) {
    case OpKind::kAdd: return "plus";
    case OpKind::kSub: return "minus";
    case OpKind::kMul: return "times";
  }
  return {};
}

std::string_view Operation::symbol() const {
  switch (kind) {
    case OpKind::kAdd: return "+";
    case OpKind::kSub: return "-";
    case OpKind::kMul: return "*";
  }
  return {};
}

std::string_view Operation::verb() const {
  switch (kind) {
    case OpKind::kAdd: return "Sum";
    case OpKind::kSub: return "Subtract";
    case OpKind::kMul: return "Multiply";
  }
  return {};
}

std::string_view Operation::id() const {
  switch (kind) {
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
  }
  return {};
}

std::string_view Operation::column_suffix() const {
  switch (kind) {
    case OpKind::kAdd: return "+";
    case OpKind::kSub: return "-";
    case OpKind::kMul: return "x";
  }
  return {};
}

std::int64_t Operation::apply(std::int64_t a, std::int64_t b) const {
  switch (kind) {
    case OpKind::kAdd: return a + b;
    case OpKind::kSub: return a - b;
    case OpKind::kMul: return a * b;
  }
  return 0;
}

std::optional<Operation> Operation::from_word(std::string_view w) {
  for (const auto& op : all()) {
    if (op.word() == w || op.symbol() == w) return op;
  }
  return std::nullopt;
}

std::optional<Operation> Operation::from_id(std::string_view id) {
  for (const auto& op : all()) {
    if (op.id() == id || op.word() == id) return op;
  }
  return std::nullopt;
}

// ----------------------------------------------------------------- Approach

const std::vector<Approach>& Approach::all() {
  static const std::vector<Approach> approaches = {decomposition(), baseline(), spaced()};
  return approaches;
}

std::string_view Approach::id() const {
  switch (kind) {
    case ApproachKind::kDecomposition: return "decomposition";
    case ApproachKind::kBaseline: return "baseline";
    case ApproachKind::kSpaced: return "spaced";
  }
  return {};
}

std::string_view Approach::row_label() const {
  switch (kind) {
    case ApproachKind::kDecomposition: return "Calculon";
    case ApproachKind::kBaseline: return "Baseline";
    case ApproachKind::kSpaced: return "Spaced";
  }
  return {};
}

std::optional<Approach> Approach::from_id(std::string_view id) {
  for (const auto& a : all()) {
    if (a.id() == id) return a;
  }
  if (id == "calculon" || id == "decomp") return decomposition();
  return std::nullopt;
}

// --------------------------------------------------------- DecomposedNumber

DecomposedNumber DecomposedNumber::of(std::int64_t n) {
  check_range(n);
  DecomposedNumber out;
  out.negative = n < 0;
  std::int64_t m = n < 0 ? -n : n;
  do {
    out.digits.push_back(static_cast<int>(m % 10));
    m /= 10;
  } while (m != 0);
  return out;
}

std::int64_t DecomposedNumber::value() const {
  std::int64_t v = 0;
  for (auto it = digits.rbegin(); it != digits.rend(); ++it) v = v * 10 + *it;
  return negative ? -v : v;
}

std::string DecomposedNumber::render(DigitOrder order) const {
  std::vector<std::string> terms;
  terms.reserve(digits.size());
  for (std::size_t i = 0; i < digits.size(); ++i) {
    terms.push_back(std::to_string(digits[i]) + " " + std::string(PlaceName::at(static_cast<int>(i)).label()));
  }
  if (order == DigitOrder::kDescending) std::reverse(terms.begin(), terms.end());
  return (negative ? "minus " : "") + join(terms, ", ");
}

std::string decompose(std::int64_t n, DigitOrder order) { return DecomposedNumber::of(n).render(order); }

DecomposedNumber parse_decomposition(std::string_view s) {
  Cursor cur(s);
  auto d = read_decomposition(cur);
  cur.expect_end();
  return d;
}

std::int64_t recompose(std::string_view s) { return parse_decomposition(s).value(); }

std::string space_digits(std::int64_t n) {
  check_range(n);
  const std::string digits = std::to_string(n < 0 ? -n : n);
  std::string out = n < 0 ? "-" : "";
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i) out += ' ';
    out += digits[i];
  }
  return out;
}

std::int64_t parse_spaced(std::string_view s) {
  Cursor cur(s);
  const auto v = read_spaced(cur);
  cur.expect_end();
  return v;
}

// ------------------------------------------------------------- observations

std::string prompt_prefix(std::int64_t n1, std::int64_t n2, Operation op, Approach approach) {
  const std::string_view head =
      approach.kind == ApproachKind::kDecomposition ? "Compute with pipeline " : "Compute ";
  return with_operands(head, n1, n2, op) + ".";
}

ArithObservation render_observation(std::int64_t n1, std::int64_t n2, Operation op, Approach approach) {
  ArithObservation obs;
  obs.n1 = n1;
  obs.n2 = n2;
  obs.op = op;
  obs.result = op.apply(n1, n2);
  obs.approach = approach;
  obs.prompt_prefix = prompt_prefix(n1, n2, op, approach);

  std::string& t = obs.text;
  t = obs.prompt_prefix;
  switch (approach.kind) {
    case ApproachKind::kDecomposition: {
      const auto d1 = decompose(n1);
      const auto d2 = decompose(n2);
      const auto dr = decompose(obs.result);
      t += " Translate from number to decomposition: " + std::to_string(n1) + " = " + d1 + ".";
      t += " Translate from number to decomposition: " + std::to_string(n2) + " = " + d2 + ".";
      t += " " + std::string(op.verb()) + " " + d1 + " " + std::string(op.symbol()) + " " + d2 + " = " + dr + ".";
      t += " Translate from decomposition to number: " + dr + " = " + std::to_string(obs.result);
      break;
    }
    case ApproachKind::kBaseline:
      t += " Final result = " + std::to_string(obs.result);
      break;
    case ApproachKind::kSpaced:
      t += " " + space_digits(n1) + " " + std::string(op.word()) + " " + space_digits(n2) + " = " +
           space_digits(obs.result) + ".";
      t += " Final result = " + std::to_string(obs.result);
      break;
  }
  return obs;
}

ParsedObservation parse_observation(std::string_view text, Approach approach) {
  Cursor cur(text);
  ParsedObservation p;
  p.approach = approach;
  cur.expect(approach.kind == ApproachKind::kDecomposition ? "Compute with pipeline " : "Compute ");
  p.n1 = cur.integer();
  cur.expect(" ");
  p.op = read_operation_word(cur);
  cur.expect(" ");
  p.n2 = cur.integer();
  cur.expect(".");

  switch (approach.kind) {
    case ApproachKind::kDecomposition: {
      for (const auto n : {p.n1, p.n2}) {
        cur.expect(" Translate from number to decomposition: ");
        const auto at = cur.pos();
        if (cur.integer() != n) throw ParseError("translated number does not match operand", at);
        cur.expect(" = ");
        const auto d = read_decomposition(cur);
        if (d.value() != n) throw ParseError("decomposition does not match operand", at);
        cur.expect(".");
      }
      cur.expect(" ");
      cur.expect(p.op.verb());
      cur.expect(" ");
      const auto lhs_at = cur.pos();
      if (read_decomposition(cur).value() != p.n1) throw ParseError("verb-line operand mismatch", lhs_at);
      cur.expect(" ");
      cur.expect(p.op.symbol());
      cur.expect(" ");
      const auto rhs_at = cur.pos();
      if (read_decomposition(cur).value() != p.n2) throw ParseError("verb-line operand mismatch", rhs_at);
      cur.expect(" = ");
      p.intermediate_result = read_decomposition(cur).value();
      cur.expect(". Translate from decomposition to number: ");
      const auto back_at = cur.pos();
      if (read_decomposition(cur).value() != p.intermediate_result) {
        throw ParseError("reconstruction input differs from verb-line result", back_at);
      }
      cur.expect(" = ");
      p.result = cur.integer();
      break;
    }
    case ApproachKind::kBaseline:
      cur.expect(" Final result = ");
      p.result = cur.integer();
      p.intermediate_result = p.result;
      break;
    case ApproachKind::kSpaced: {
      cur.expect(" ");
      const auto a_at = cur.pos();
      if (read_spaced(cur) != p.n1) throw ParseError("spaced operand mismatch", a_at);
      cur.expect(" ");
      cur.expect(p.op.word());
      cur.expect(" ");
      const auto b_at = cur.pos();
      if (read_spaced(cur) != p.n2) throw ParseError("spaced operand mismatch", b_at);
      cur.expect(" = ");
      p.intermediate_result = read_spaced(cur);
      cur.expect(". Final result = ");
      p.result = cur.integer();
      break;
    }
  }
  cur.expect_end();
  return p;
}

std::optional<ParsedObservation> parse_observation(std::string_view text) {
  std::optional<ParsedObservation> found;
  for (const auto& approach : Approach::all()) {
    try {
      auto p = parse_observation(text, approach);
      if (found) return std::nullopt;
      found = p;
    } catch (const ParseError&) {
    }
  }
  return found;
}

std::optional<std::int64_t> extract_answer(std::string_view generated) {
  constexpr std::string_view kTrailing = " \t\r\n.,;:!?";
  const auto last = generated.find_last_not_of(kTrailing);
  if (last == std::string_view::npos) return std::nullopt;
  std::size_t end = last + 1;
  std::size_t start = end;
  while (start > 0 && generated[start - 1] >= '0' && generated[start - 1] <= '9') --start;
  if (start == end) return std::nullopt;
  if (start > 0 && generated[start - 1] == '-') --start;
  std::int64_t value = 0;
  const auto [ptr, ec] = std::from_chars(generated.data() + start, generated.data() + end, value);
  if (ec != std::errc{}) return std::nullopt;
  return value;
}

// ---------------------------------------------------------- few-shot prompts

namespace {

// Addition prompt with four worked examples. Digit orders differ per line:
// translation lines are written most significant place first, the Sum line
// units first, and the reconstruction line most significant first again.
constexpr std::string_view kFewshotAddition =
    "This application makes an arithmetic operation decomposing the input numbers.\n"
    "###\n"
    "Compute with pipeline 28 plus 39. \n"
    "Translate from number to decomposition: 28 = 2 tens, 8 units. \n"
    "Translate from number to decomposition: 39 = 3 tens, 9 units. \n"
    "Sum 8 units, 2 tens + 9 units, 3 tens = 7 units, 6 tens. \n"
    "Translate from decomposition to number: 6 tens, 7 units = 67\n"
    "###\n"
    "Compute with pipeline 804 plus 121. \n"
    "Translate from number to decomposition: 804 = 8 hundreds, 0 tens, 4 units. \n"
    "Translate from number to decomposition: 121 = 1 hundreds, 2 tens, 1 units. \n"
    "Sum 4 units, 0 tens, 8 hundreds + 1 units, 2 tens, 1 hundreds = 5 units, 2 tens, 9 hundreds. \n"
    "Translate from decomposition to number: 9 hundreds, 2 tens, 5 units = 925\n"
    "###\n"
    "Compute with pipeline 1201 plus 1302. \n"
    "Translate from number to decomposition: 1201 = 1 thousands, 2 hundreds, 0 tens, 1 units. \n"
    "Translate from number to decomposition: 1302 = 1 thousands, 3 hundreds, 0 tens, 2 units. \n"
    "Sum 1 units, 0 tens, 2 hundreds, 1 thousands + 2 units, 0 tens, 3 hundreds, 1 thousands = "
    "3 units, 0 tens, 5 hundreds, 2 thousands. \n"
    "Translate from decomposition to number: 2 thousands, 5 hundreds, 0 tens, 3 units = 2503\n"
    "###\n"
    "Compute with pipeline 97734 plus 86328. \n"
    "Translate from number to decomposition: 97734 = 9 tens of thousands, 7 thousands, 7 hundreds, 3 tens, 4 units. \n"
    "Translate from number to decomposition: 86328 = 8 tens of thousands, 6 thousands, 3 hundreds, 2 tens, 8 units. \n"
    "Sum 4 units, 3 tens, 7 hundreds, 7 thousands, 9 tens of thousands + 8 units, 2 tens, 3 hundreds, 6 thousands, "
    "8 tens of thousands = 2 units, 6 tens, 0 hundreds, 4 thousands, 8 tens of thousands, 1 hundreds of thousands. \n"
    "Translate from decomposition to number: 1 hundreds of thousands, 8 tens of thousands, 4 thousands, 0 hundreds, "
    "6 tens, 2 units = 184062\n"
    "### ";

constexpr std::array<std::pair<std::int64_t, std::int64_t>, 4> kFewshotOperands = {{
    {28, 39}, {804, 121}, {1201, 1302}, {97734, 86328},
}};

}  // namespace

std::string build_fewshot_prompt(std::int64_t n1, std::int64_t n2, Operation op) {
  check_range(n1);
  check_range(n2);
  std::string prompt(kFewshotAddition);
  // Other operations reuse the addition examples verbatim with the
  // {plus, +, Sum} vocabulary swapped for the operation's own.
  if (op.kind != OpKind::kAdd) {
    replace_all(prompt, " plus ", " " + std::string(op.word()) + " ");
    replace_all(prompt, " + ", " " + std::string(op.symbol()) + " ");
    replace_all(prompt, "\nSum ", "\n" + std::string(op.verb()) + " ");
  }
  prompt += with_operands("Compute with pipeline ", n1, n2, op) + ".";
  return prompt;
}

std::string build_plain_fewshot_prompt(std::int64_t n1, std::int64_t n2, Operation op) {
  check_range(n1);
  check_range(n2);
  std::string prompt;
  for (const auto& [a, b] : kFewshotOperands) {
    prompt += with_operands("Q: What is ", a, b, op) + "?\nA: " + std::to_string(op.apply(a, b)) + "\n\n";
  }
  prompt += with_operands("Q: What is ", n1, n2, op) + "?\nA:";
  return prompt;
}

}  // namespace numlab
