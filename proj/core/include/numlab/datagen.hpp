#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "numlab/arith_format.hpp"

namespace numlab {

struct OperandPair {
  std::int64_t n1 = 0;
  std::int64_t n2 = 0;
  friend auto operator<=>(const OperandPair&, const OperandPair&) = default;
};

struct Band {
  int digits = 2;
  std::size_t count = 0;
  friend bool operator==(const Band&, const Band&) = default;
};

// Inclusive operand range for a digit band. The 2-digit band also covers
// one-digit numbers, i.e. [0, 99].
std::pair<std::int64_t, std::int64_t> band_range(int digits);

// Digit band a test case belongs to: digits of the larger operand, at least 2.
int band_of(std::int64_t n1, std::int64_t n2);

struct SamplingSpec {
  Operation op;
  std::vector<Band> bands;
  std::uint64_t seed = 0;

  // ADD/SUB: 3000 pairs per band for N = 2..5; MUL: 3000 pairs for N = 2.
  static SamplingSpec defaults(Operation op, std::uint64_t seed);
  std::size_t total() const;
  void validate() const;
};

// Uniform independent sampling (with replacement), band by band, in band order.
std::vector<OperandPair> sample_pairs(const SamplingSpec& spec);

struct TestCase {
  std::int64_t n1 = 0;
  std::int64_t n2 = 0;
  Operation op;
  std::int64_t expected = 0;
  std::string source_line;

  int band() const { return band_of(n1, n2); }
};

// Replaces every pair that appears (as an ordered pair) in `tests` by a fresh
// draw from the same band, so that per-band counts are preserved. `pairs` must
// be laid out band by band as produced by sample_pairs(spec). Throws Error if
// a replacement cannot be found within the retry budget.
std::vector<OperandPair> exclude_test_pairs(std::vector<OperandPair> pairs, const SamplingSpec& spec,
                                            const std::vector<TestCase>& tests, std::size_t retry_budget = 10000);

struct DatasetMeta {
  SamplingSpec spec;
  Approach approach;
  std::size_t excluded_test_cases = 0;
};

// One observation per line plus `<path>.meta` (key = value lines).
void write_dataset(const std::vector<OperandPair>& pairs, const DatasetMeta& meta, const std::filesystem::path& path);

// Reads `<dataset>.meta`. Throws IoError if missing, ParseError if malformed.
DatasetMeta read_dataset_meta(const std::filesystem::path& dataset);

// "2:3000,3:3000" -> bands; the inverse of format_bands.
std::vector<Band> parse_bands(std::string_view s);
std::string format_bands(const std::vector<Band>& bands);

std::vector<std::string> read_lines(const std::filesystem::path& path);

enum class TestSetFormat { kNative, kGpt3Jsonl };

struct TestSetWarning {
  std::size_t line_number = 0;
  std::string message;
  std::string line;
};

struct LoadedTestSet {
  std::vector<TestCase> cases;
  // Lines whose stated answer disagrees with the arithmetic. They are not
  // returned as cases.
  std::vector<TestSetWarning> warnings;
};

// Native format: "n1<TAB>word<TAB>n2<TAB>expected" per line. The gpt3-jsonl
// format holds {"context": "Q: What is A plus B?\nA:", "completion": " C"}.
// Throws ParseError naming the line number on unparseable input.
LoadedTestSet load_test_set(const std::filesystem::path& path, TestSetFormat format);
LoadedTestSet parse_test_set(const std::string& content, TestSetFormat format);

// Guess from the file extension (.jsonl -> gpt3-jsonl).
TestSetFormat detect_test_set_format(const std::filesystem::path& path);

// Seeded native-format test set with `count` distinct pairs from one band.
std::vector<TestCase> make_test_set(Operation op, int digits, std::size_t count, std::uint64_t seed);
void write_test_set(const std::vector<TestCase>& cases, const std::filesystem::path& path);

}  // namespace numlab
