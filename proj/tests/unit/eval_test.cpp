#include <gtest/gtest.h>

#include <algorithm>

#include "json.hpp"

#include "numlab/error.hpp"
#include "numlab/eval.hpp"
#include "numlab/report.hpp"

using namespace numlab;

namespace {

std::vector<TestCase> all_columns(std::size_t per_task) {
  std::vector<TestCase> cases;
  for (const auto& op : Operation::all()) {
    const int max_band = op == Operation::mul() ? 2 : 5;
    for (int d = 2; d <= max_band; ++d) {
      auto t = make_test_set(op, d, per_task, 100 + static_cast<std::uint64_t>(d));
      cases.insert(cases.end(), t.begin(), t.end());
    }
  }
  return cases;
}

// Answers with a fixed continuation.
class FixedGenerator final : public Generator {
 public:
  explicit FixedGenerator(std::string text) : text_(std::move(text)) {}
  Generation generate(const std::string& prompt) const override { return {prompt, text_, false}; }

 private:
  std::string text_;
};

}  // namespace

TEST(Eval, TaskKeysAndColumns) {
  EXPECT_EQ(task_key(Operation::add(), 5), "5D+");
  EXPECT_EQ(task_key(Operation::mul(), 2), "2Dx");
  EXPECT_EQ(task_columns(),
            (std::vector<std::string>{"2D+", "3D+", "4D+", "5D+", "2D-", "3D-", "4D-", "5D-", "2Dx"}));
}

TEST(Eval, ParsePromptPrefix) {
  for (const auto& a : Approach::all()) {
    const auto p = parse_prompt_prefix(prompt_prefix(123, 45, Operation::sub(), a));
    ASSERT_TRUE(p.has_value());
    EXPECT_EQ(p->n1, 123);
    EXPECT_EQ(p->n2, 45);
    EXPECT_EQ(p->op, Operation::sub());
  }
  EXPECT_FALSE(parse_prompt_prefix("Compute 1 plus.").has_value());
}

TEST(Eval, OracleScoresFullMarksEverywhere) {
  const auto cases = all_columns(20);
  for (const auto& a : Approach::all()) {
    const auto r = evaluate(OracleGenerator{}, cases, a);
    ASSERT_EQ(r.tasks.size(), 9u);
    for (const auto& [task, tally] : r.tasks) {
      EXPECT_EQ(tally.evaluated, 20u) << task;
      EXPECT_EQ(tally.accuracy(), 100.0) << task;
    }
  }
}

TEST(Eval, EmptyScoresZeroEverywhere) {
  const auto r = evaluate(EmptyGenerator{}, all_columns(20), Approach::decomposition());
  for (const auto& [task, tally] : r.tasks) EXPECT_EQ(tally.correct, 0u) << task;
}

TEST(Eval, OnlyContinuationIsScored) {
  // 0 + n2 = n2 would match if the prompt's trailing operand were scored.
  std::vector<TestCase> cases{{0, 42, Operation::add(), 42, ""}};
  const auto r = evaluate(EmptyGenerator{}, cases, Approach::baseline());
  EXPECT_EQ(r.tasks.at("2D+").correct, 0u);
  const auto fixed = evaluate(FixedGenerator(" Final result = 42"), cases, Approach::baseline());
  EXPECT_EQ(fixed.tasks.at("2D+").correct, 1u);
}

TEST(Eval, ParallelWorkersAreOrderStable) {
  const auto cases = all_columns(10);
  const auto a = evaluate(OracleGenerator{}, cases, Approach::spaced(), 1);
  const auto b = evaluate(OracleGenerator{}, cases, Approach::spaced(), 4);
  ASSERT_EQ(a.outcomes.size(), b.outcomes.size());
  for (std::size_t i = 0; i < a.outcomes.size(); ++i) {
    EXPECT_EQ(a.outcomes[i].prompt, b.outcomes[i].prompt);
    EXPECT_EQ(a.outcomes[i].index, i);
  }
}

TEST(Eval, FailureSamples) {
  std::vector<TestCase> cases{{10, 20, Operation::add(), 30, ""}, {1, 2, Operation::add(), 3, ""}};
  const auto r = evaluate(FixedGenerator(" = 3"), cases, Approach::baseline());
  const auto jsonl = failure_samples_jsonl(r);
  const auto j = nlohmann::json::parse(jsonl.substr(0, jsonl.find('\n')));
  EXPECT_EQ(j["expected"], 30);
  EXPECT_EQ(j["extracted"], 3);
  EXPECT_EQ(j["task"], "2D+");
  EXPECT_EQ(std::count(jsonl.begin(), jsonl.end(), '\n'), 1);
}

TEST(Eval, GreedyDecodeIsDeterministicAndBounded) {
  const auto tok = Tokenizer::characters("0123456789 .=+-*abcdefghijklmnopqrstuvwxyzCFRSTU,");
  ModelConfig c;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_model = 16;
  c.d_ff = 32;
  c.max_seq_len = 64;
  c.vocab_size = static_cast<int>(tok.vocab_size());
  const auto m = Transformer<float>::initialize(c, 3);
  const auto a = greedy_decode(m, tok, "Compute 1 plus 2.", 10);
  const auto b = greedy_decode(m, tok, "Compute 1 plus 2.", 10);
  EXPECT_EQ(a.continuation, b.continuation);
  EXPECT_EQ(a.truncated, b.truncated);
  EXPECT_LE(tok.encode(a.continuation).size(), 10u);
}

TEST(Report, CsvLayoutAndRoundTrip) {
  EvalReport r;
  const auto cases = all_columns(4);
  r.add("Calculon", evaluate(OracleGenerator{}, cases, Approach::decomposition()));
  r.set_cell("Baseline", "5D+", {12.346, 0, 0});
  const auto csv = r.to_csv();
  EXPECT_TRUE(csv.starts_with("Approach,2D+,3D+,4D+,5D+,2D-,3D-,4D-,5D-,2Dx\n"));
  EXPECT_NE(csv.find("Calculon,100.00,100.00"), std::string::npos);
  EXPECT_NE(csv.find("Baseline,,,,12.35,,,,,"), std::string::npos);
  EXPECT_TRUE(EvalReport::parse_csv(csv).same_accuracies(r));
  EXPECT_EQ(EvalReport{}.to_csv(), "Approach,2D+,3D+,4D+,5D+,2D-,3D-,4D-,5D-,2Dx\n");
}

TEST(Report, ParseRejectsBadHeader) {
  EXPECT_THROW(EvalReport::parse_csv("Approach,2D+\nx,1\n"), ParseError);
  EXPECT_THROW(EvalReport::parse_csv("Approach,2D+,3D+,4D+,5D+,2D-,3D-,4D-,5D-,2Dx\nx,abc,,,,,,,,\n"), ParseError);
}

TEST(Report, CompareAndFormat) {
  EvalReport a, b;
  a.set_cell("Calculon", "2D+", {90.0, 0, 0});
  b.set_cell("Calculon", "2D+", {91.25, 0, 0});
  b.set_cell("Spaced", "2D+", {3.0, 0, 0});
  const auto d = compare_reports(a, b);
  ASSERT_EQ(d.rows.size(), 1u);
  EXPECT_DOUBLE_EQ(d.rows[0].cells.at("2D+").accuracy, 1.25);
  EXPECT_EQ(d.only_in_b, (std::vector<std::string>{"Spaced"}));
  EXPECT_NE(delta_csv(d).find("Calculon,+1.25"), std::string::npos);
  EXPECT_EQ(format_percent(-0.001), "0.00");
  EXPECT_EQ(format_percent(72.846), "72.85");
  EXPECT_NE(a.to_html().find("<table"), std::string::npos);
  EXPECT_EQ(parse_report_format("html"), ReportFormat::kHtml);
}
