#pragma once

// Rendering and parsing of place-value decompositions and of the three
// training-string formats (decomposition pipeline, baseline, spaced digits).

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace numlab {

// Largest supported magnitude is kMaxMagnitude - 1 (six places).
inline constexpr std::int64_t kMaxMagnitude = 1'000'000;
inline constexpr int kMaxPlaces = 6;

struct PlaceName {
  int index = 0;

  // Throws RangeError for index outside [0, 5].
  static PlaceName at(int index);
  // Returns nullopt for an unknown label.
  static std::optional<PlaceName> from_label(std::string_view label);

  std::string_view label() const;
  friend bool operator==(PlaceName, PlaceName) = default;
};

enum class OpKind { kAdd, kSub, kMul };

struct Operation {
  OpKind kind = OpKind::kAdd;

  static Operation add() { return {OpKind::kAdd}; }
  static Operation sub() { return {OpKind::kSub}; }
  static Operation mul() { return {OpKind::kMul}; }
  static const std::vector<Operation>& all();

  // "plus" / "minus" / "times"
  std::string_view word() const;
  // "+" / "-" / "*"
  std::string_view symbol() const;
  // "Sum" / "Subtract" / "Multiply"
  std::string_view verb() const;
  // "add" / "sub" / "mul", used in file names and flags.
  std::string_view id() const;
  // Table-2 column suffix: "+" / "-" / "x".
  std::string_view column_suffix() const;

  std::int64_t apply(std::int64_t a, std::int64_t b) const;

  static std::optional<Operation> from_word(std::string_view word);
  static std::optional<Operation> from_id(std::string_view id);

  friend bool operator==(Operation, Operation) = default;
};

enum class ApproachKind { kDecomposition, kBaseline, kSpaced };

struct Approach {
  ApproachKind kind = ApproachKind::kDecomposition;

  static Approach decomposition() { return {ApproachKind::kDecomposition}; }
  static Approach baseline() { return {ApproachKind::kBaseline}; }
  static Approach spaced() { return {ApproachKind::kSpaced}; }
  static const std::vector<Approach>& all();

  // "decomposition" / "baseline" / "spaced"
  std::string_view id() const;
  // Report row label: "Calculon" / "Baseline" / "Spaced"
  std::string_view row_label() const;

  static std::optional<Approach> from_id(std::string_view id);

  friend bool operator==(Approach, Approach) = default;
};

enum class DigitOrder { kAscending, kDescending };

struct DecomposedNumber {
  bool negative = false;
  // digits[i] is the digit at place i (units first).
  std::vector<int> digits;

  static DecomposedNumber of(std::int64_t n);
  std::int64_t value() const;
  std::string render(DigitOrder order) const;

  friend bool operator==(const DecomposedNumber&, const DecomposedNumber&) = default;
};

// "8 units, 6 tens, 8 hundreds" for 868 (ascending). Negative values get a
// "minus " prefix before the magnitude's decomposition.
std::string decompose(std::int64_t n, DigitOrder order = DigitOrder::kAscending);

// Parses either digit order with an optional "minus " prefix. Throws
// ParseError on malformed terms, unknown labels, duplicate or missing places.
DecomposedNumber parse_decomposition(std::string_view s);
std::int64_t recompose(std::string_view s);

// "8 6 8" for 868; "-1 9" for -19.
std::string space_digits(std::int64_t n);
// Inverse of space_digits; throws ParseError.
std::int64_t parse_spaced(std::string_view s);

struct ArithObservation {
  std::int64_t n1 = 0;
  std::int64_t n2 = 0;
  Operation op;
  std::int64_t result = 0;
  Approach approach;
  std::string text;
  // Prompt given to the model at inference time; always a prefix of text.
  std::string prompt_prefix;

  // text minus prompt_prefix: what the model must generate.
  std::string_view continuation() const { return std::string_view(text).substr(prompt_prefix.size()); }
};

std::string prompt_prefix(std::int64_t n1, std::int64_t n2, Operation op, Approach approach);
ArithObservation render_observation(std::int64_t n1, std::int64_t n2, Operation op, Approach approach);

struct ParsedObservation {
  std::int64_t n1 = 0;
  std::int64_t n2 = 0;
  Operation op;
  std::int64_t result = 0;
  Approach approach;
  // Values recomposed from the intermediate steps (decomposition: the
  // verb-line result; spaced: the spaced result). Equal to result for
  // well-formed training strings.
  std::int64_t intermediate_result = 0;
};

// Strict parse of a full observation string under one approach grammar.
ParsedObservation parse_observation(std::string_view text, Approach approach);
// Tries every grammar; returns nullopt unless exactly one accepts.
std::optional<ParsedObservation> parse_observation(std::string_view text);

// The trailing integer of a generated string (optional leading minus), after
// dropping trailing whitespace and punctuation. Never throws.
std::optional<std::int64_t> extract_answer(std::string_view generated);

// Few-shot prompt with four worked decomposition examples, ending in the
// query line "Compute with pipeline {n1} {word} {n2}.".
std::string build_fewshot_prompt(std::int64_t n1, std::int64_t n2, Operation op);

// Plain few-shot question prompt ("Q: What is A plus B?\nA: C") over the same
// four example operand pairs, ending in "Q: What is {n1} {word} {n2}?\nA:".
std::string build_plain_fewshot_prompt(std::int64_t n1, std::int64_t n2, Operation op);

}  // namespace numlab
