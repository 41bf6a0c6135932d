#include "numlab/datagen.hpp"

#include <algorithm>
#include <charconv>
#include <regex>
#include <set>
#include <sstream>

#include "json.hpp"
#include "numlab/error.hpp"
#include "numlab/io.hpp"
#include "numlab/rng.hpp"

namespace numlab {

namespace {

constexpr std::uint64_t kResampleStream = 0x5eed'e4c1'0de5ULL;
constexpr std::uint64_t kTestSetStream = 0x7e57'5e75ULL;

OperandPair draw(Rng& rng, int digits) {
  const auto [lo, hi] = band_range(digits);
  const auto a = uniform_in(rng, lo, hi);
  const auto b = uniform_in(rng, lo, hi);
  return {a, b};
}

std::int64_t parse_int(std::string_view s, std::size_t line_number) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ParseError("line " + std::to_string(line_number) + ": not an integer: \"" + std::string(s) + "\"", 0);
  }
  return v;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::pair<std::int64_t, std::int64_t> band_range(int digits) {
  if (digits < 1 || digits > 5) throw ValidationError("digit band must be in 1..5, got " + std::to_string(digits));
  if (digits <= 2) return {0, digits == 1 ? 9 : 99};
  std::int64_t lo = 1;
  for (int i = 1; i < digits; ++i) lo *= 10;
  return {lo, lo * 10 - 1};
}

int band_of(std::int64_t n1, std::int64_t n2) {
  auto m = std::max(n1 < 0 ? -n1 : n1, n2 < 0 ? -n2 : n2);
  int d = 1;
  while (m >= 10) {
    m /= 10;
    ++d;
  }
  return std::max(d, 2);
}

SamplingSpec SamplingSpec::defaults(Operation op, std::uint64_t seed) {
  SamplingSpec s;
  s.op = op;
  s.seed = seed;
  if (op.kind == OpKind::kMul) {
    s.bands = {{2, 3000}};
  } else {
    s.bands = {{2, 3000}, {3, 3000}, {4, 3000}, {5, 3000}};
  }
  return s;
}

std::size_t SamplingSpec::total() const {
  std::size_t n = 0;
  for (const auto& b : bands) n += b.count;
  return n;
}

void SamplingSpec::validate() const {
  if (bands.empty()) throw ValidationError("sampling spec has no bands");
  for (const auto& b : bands) band_range(b.digits);
}

std::vector<OperandPair> sample_pairs(const SamplingSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::vector<OperandPair> pairs;
  pairs.reserve(spec.total());
  for (const auto& band : spec.bands) {
    for (std::size_t i = 0; i < band.count; ++i) pairs.push_back(draw(rng, band.digits));
  }
  return pairs;
}

std::vector<OperandPair> exclude_test_pairs(std::vector<OperandPair> pairs, const SamplingSpec& spec,
                                            const std::vector<TestCase>& tests, std::size_t retry_budget) {
  if (tests.empty()) return pairs;
  if (pairs.size() != spec.total()) {
    throw ValidationError("pair list size " + std::to_string(pairs.size()) + " does not match sampling spec total " +
                          std::to_string(spec.total()));
  }
  std::set<OperandPair> forbidden;
  for (const auto& t : tests) forbidden.insert({t.n1, t.n2});

  Rng rng(mix_seed(spec.seed, kResampleStream));
  std::size_t offset = 0;
  for (const auto& band : spec.bands) {
    for (std::size_t i = offset; i < offset + band.count; ++i) {
      std::size_t attempts = 0;
      while (forbidden.contains(pairs[i])) {
        if (++attempts > retry_budget) {
          throw Error("cannot draw a " + std::to_string(band.digits) + "-digit pair outside the test set after " +
                      std::to_string(retry_budget) + " attempts");
        }
        pairs[i] = draw(rng, band.digits);
      }
    }
    offset += band.count;
  }
  return pairs;
}

void write_dataset(const std::vector<OperandPair>& pairs, const DatasetMeta& meta, const std::filesystem::path& path) {
  std::string body;
  body.reserve(pairs.size() * 160);
  for (const auto& p : pairs) {
    body += render_observation(p.n1, p.n2, meta.spec.op, meta.approach).text;
    body += '\n';
  }
  write_file_atomic(path, body);

  std::ostringstream m;
  m << "format = numlab-dataset/1\n";
  m << "op = " << meta.spec.op.id() << "\n";
  m << "approach = " << meta.approach.id() << "\n";
  m << "seed = " << meta.spec.seed << "\n";
  m << "bands = " << format_bands(meta.spec.bands) << "\n";
  m << "count = " << pairs.size() << "\n";
  m << "excluded_test_cases = " << meta.excluded_test_cases << "\n";
  auto meta_path = path;
  meta_path += ".meta";
  write_file_atomic(meta_path, m.str());
}

std::vector<Band> parse_bands(std::string_view s) {
  std::vector<Band> bands;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto end = s.find(',', start);
    if (end == std::string_view::npos) end = s.size();
    const auto item = s.substr(start, end - start);
    const auto colon = item.find(':');
    Band b;
    const auto bad = [&] { return ValidationError("bad band '" + std::string(item) + "' (expected digits:count)"); };
    if (colon == std::string_view::npos) throw bad();
    const auto [p1, e1] = std::from_chars(item.data(), item.data() + colon, b.digits);
    const auto [p2, e2] = std::from_chars(item.data() + colon + 1, item.data() + item.size(), b.count);
    if (e1 != std::errc{} || p1 != item.data() + colon || e2 != std::errc{} || p2 != item.data() + item.size()) throw bad();
    bands.push_back(b);
    start = end + 1;
  }
  return bands;
}

std::string format_bands(const std::vector<Band>& bands) {
  std::string out;
  for (std::size_t i = 0; i < bands.size(); ++i) {
    out += (i ? "," : "") + std::to_string(bands[i].digits) + ":" + std::to_string(bands[i].count);
  }
  return out;
}

DatasetMeta read_dataset_meta(const std::filesystem::path& dataset) {
  auto path = dataset;
  path += ".meta";
  const auto kv = parse_key_values(read_file(path), path.string());
  auto get = [&](const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw ParseError(path.string() + ": missing key '" + key + "'", 0);
    return it->second;
  };
  if (get("format") != "numlab-dataset/1") throw ParseError(path.string() + ": unsupported format", 0);
  DatasetMeta meta;
  const auto op = Operation::from_id(get("op"));
  const auto approach = Approach::from_id(get("approach"));
  if (!op || !approach) throw ParseError(path.string() + ": unknown op or approach", 0);
  meta.spec.op = *op;
  meta.approach = *approach;
  meta.spec.seed = std::stoull(get("seed"));
  meta.spec.bands = parse_bands(get("bands"));
  meta.excluded_test_cases = std::stoull(get("excluded_test_cases"));
  return meta;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  const auto content = read_file(path);
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < content.size()) {
    auto end = content.find('\n', start);
    if (end == std::string::npos) end = content.size();
    std::string line = content.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    start = end + 1;
  }
  return lines;
}

TestSetFormat detect_test_set_format(const std::filesystem::path& path) {
  return path.extension() == ".jsonl" ? TestSetFormat::kGpt3Jsonl : TestSetFormat::kNative;
}

LoadedTestSet parse_test_set(const std::string& content, TestSetFormat format) {
  static const std::regex kQuestion(R"(What is (-?\d+) (plus|minus|times) (-?\d+)\?)");
  LoadedTestSet out;
  std::istringstream in(content);
  std::string raw;
  std::size_t line_number = 0;
  while (std::getline(in, raw)) {
    ++line_number;
    const auto line = trim(raw);
    if (line.empty()) continue;
    TestCase tc;
    tc.source_line = std::string(line);
    std::int64_t stated = 0;
    if (format == TestSetFormat::kNative) {
      std::vector<std::string_view> fields;
      std::size_t start = 0;
      for (;;) {
        const auto tab = line.find('\t', start);
        fields.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
        if (tab == std::string_view::npos) break;
        start = tab + 1;
      }
      if (fields.size() != 4) {
        throw ParseError("line " + std::to_string(line_number) + ": expected 4 tab-separated fields, got " +
                             std::to_string(fields.size()),
                         0);
      }
      const auto op = Operation::from_word(trim(fields[1]));
      if (!op) throw ParseError("line " + std::to_string(line_number) + ": unknown operation", 0);
      tc.op = *op;
      tc.n1 = parse_int(trim(fields[0]), line_number);
      tc.n2 = parse_int(trim(fields[2]), line_number);
      stated = parse_int(trim(fields[3]), line_number);
    } else {
      nlohmann::json obj;
      try {
        obj = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("line " + std::to_string(line_number) + ": invalid JSON: " + e.what(), 0);
      }
      if (!obj.is_object() || !obj.contains("context") || !obj.contains("completion") ||
          !obj["context"].is_string() || !obj["completion"].is_string()) {
        throw ParseError("line " + std::to_string(line_number) + ": missing context/completion string fields", 0);
      }
      const auto context = obj["context"].get<std::string>();
      std::smatch m;
      if (!std::regex_search(context, m, kQuestion)) {
        throw ParseError("line " + std::to_string(line_number) + ": context has no \"What is A <op> B?\" question", 0);
      }
      tc.n1 = parse_int(m[1].str(), line_number);
      tc.op = *Operation::from_word(m[2].str());
      tc.n2 = parse_int(m[3].str(), line_number);
      stated = parse_int(trim(obj["completion"].get<std::string>()), line_number);
    }
    tc.expected = tc.op.apply(tc.n1, tc.n2);
    if (stated != tc.expected) {
      out.warnings.push_back({line_number,
                              "stated answer " + std::to_string(stated) + " != " + std::to_string(tc.n1) + " " +
                                  std::string(tc.op.word()) + " " + std::to_string(tc.n2) + " = " +
                                  std::to_string(tc.expected),
                              tc.source_line});
      continue;
    }
    out.cases.push_back(std::move(tc));
  }
  return out;
}

LoadedTestSet load_test_set(const std::filesystem::path& path, TestSetFormat format) {
  try {
    return parse_test_set(read_file(path), format);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.position());
  }
}

std::vector<TestCase> make_test_set(Operation op, int digits, std::size_t count, std::uint64_t seed) {
  const auto [lo, hi] = band_range(digits);
  const auto span = static_cast<std::size_t>(hi - lo + 1);
  if (count > span * span) throw ValidationError("test set larger than the band's pair space");
  Rng rng(mix_seed(seed, kTestSetStream + static_cast<std::uint64_t>(digits) * 8 + static_cast<std::uint64_t>(op.kind)));
  std::set<OperandPair> seen;
  std::vector<TestCase> cases;
  cases.reserve(count);
  while (cases.size() < count) {
    const auto p = draw(rng, digits);
    if (!seen.insert(p).second) continue;
    TestCase tc;
    tc.n1 = p.n1;
    tc.n2 = p.n2;
    tc.op = op;
    tc.expected = op.apply(p.n1, p.n2);
    tc.source_line = std::to_string(p.n1) + "\t" + std::string(op.word()) + "\t" + std::to_string(p.n2) + "\t" +
                     std::to_string(tc.expected);
    cases.push_back(std::move(tc));
  }
  return cases;
}

void write_test_set(const std::vector<TestCase>& cases, const std::filesystem::path& path) {
  std::string body;
  for (const auto& c : cases) {
    body += std::to_string(c.n1) + "\t" + std::string(c.op.word()) + "\t" + std::to_string(c.n2) + "\t" +
            std::to_string(c.expected) + "\n";
  }
  write_file_atomic(path, body);
}

}  // namespace numlab
