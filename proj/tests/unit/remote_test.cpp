#include <gtest/gtest.h>

#include "numlab/error.hpp"
#include "numlab/remote.hpp"
#include "json.hpp"
#include "support/mock_endpoint.hpp"

using namespace numlab;
using nlohmann::json;
using numlab::testing::MockServer;

namespace {

std::vector<TestCase> cases(std::size_t per_task) {
  auto a = make_test_set(Operation::add(), 2, per_task, 1);
  const auto b = make_test_set(Operation::sub(), 3, per_task, 2);
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

RemoteConfig config_for(const MockServer& s) {
  RemoteConfig c;
  c.endpoint = s.url();
  c.retries = 2;
  c.timeout_seconds = 5;
  return c;
}

}  // namespace

TEST(Remote, PromptsMatchBuilders) {
  const TestCase tc{13, 44, Operation::add(), 57, ""};
  EXPECT_EQ(remote_prompt(tc, PromptStyle::kDecompositionFewshot), build_fewshot_prompt(13, 44, Operation::add()));
  EXPECT_EQ(remote_prompt(tc, PromptStyle::kPlainFewshot), build_plain_fewshot_prompt(13, 44, Operation::add()));
  EXPECT_EQ(apply_stop("= 57\n###\nmore", PromptStyle::kDecompositionFewshot), "= 57\n");
  EXPECT_EQ(apply_stop(" 57\nQ: next", PromptStyle::kPlainFewshot), " 57");
}

TEST(Remote, RequestBodyAndFieldExtraction) {
  RemoteConfig c;
  c.endpoint = "http://x/y";
  c.model = "m1";
  const auto body = json::parse(request_body(c, "hi"));
  EXPECT_EQ(body["prompt"], "hi");
  EXPECT_EQ(body["model"], "m1");
  EXPECT_EQ(body["stop"][0], "###");
  EXPECT_DOUBLE_EQ(body["temperature"].get<double>(), 0.7);
  EXPECT_EQ(extract_field(R"({"choices":[{"text":"ok"}]})", "choices.0.text"), "ok");
  EXPECT_EQ(extract_field(R"({"choices":[]})", "choices.0.text"), std::nullopt);
  EXPECT_EQ(extract_field("not json", "a"), std::nullopt);
}

TEST(Remote, ValidationAndLabels) {
  RemoteConfig c;
  EXPECT_THROW(c.validate(), ValidationError);
  c.endpoint = "http://h/p";
  EXPECT_EQ(c.label(), "Remote FS decomp");
  c.style = PromptStyle::kPlainFewshot;
  EXPECT_EQ(c.label(), "Remote FS");
  c.endpoint = "ftp://h/p";
  EXPECT_THROW(http_transport(c, std::nullopt), ValidationError);
}

TEST(Remote, MockEndpointEndToEnd) {
  MockServer server;
  auto cfg = config_for(server);
  cfg.max_cases = 100;
  const auto tcs = cases(120);
  std::vector<std::size_t> order;
  const auto run = run_remote_eval(cfg, tcs, http_transport(cfg, std::string("secret")),
                                   [&](const TranscriptEntry& e) { order.push_back(e.index); });
  // First 100 per task only.
  ASSERT_EQ(run.transcript.size(), 200u);
  EXPECT_EQ(server.bodies().size(), 200u);
  for (std::size_t i = 0; i < order.size(); ++i) EXPECT_EQ(order[i], i);
  EXPECT_EQ(run.transcript[0].n1, tcs[0].n1);
  EXPECT_EQ(run.transcript[100].n1, tcs[120].n1);
  EXPECT_EQ(json::parse(server.bodies()[0])["prompt"], build_fewshot_prompt(tcs[0].n1, tcs[0].n2, Operation::add()));
  EXPECT_EQ(server.auth()[0], "Bearer secret");
  const auto* row = run.report.find("Remote FS decomp");
  ASSERT_NE(row, nullptr);
  EXPECT_EQ(row->cells.at("2D+").accuracy, 100.0);
  EXPECT_EQ(row->cells.at("3D-").accuracy, 100.0);
  EXPECT_EQ(run.skipped, 0u);

  const auto replay = replay_transcript(transcript_jsonl(run.transcript), cfg.response_field);
  EXPECT_EQ(replay.report.to_csv(), run.report.to_csv());
}

TEST(Remote, RetriesThenSucceeds) {
  MockServer server(2);
  auto cfg = config_for(server);
  const std::vector<TestCase> one{{1, 2, Operation::add(), 3, ""}};
  const auto run = run_remote_eval(cfg, one, http_transport(cfg, std::nullopt));
  ASSERT_EQ(run.transcript.size(), 1u);
  EXPECT_EQ(run.transcript[0].attempts, 3);
  EXPECT_TRUE(run.transcript[0].correct);
  EXPECT_EQ(server.auth()[0], "");
}

TEST(Remote, ExhaustedRetriesAreSkippedNotWrong) {
  MockServer server(100);
  auto cfg = config_for(server);
  cfg.retries = 1;
  const std::vector<TestCase> two{{1, 2, Operation::add(), 3, ""}, {4, 5, Operation::add(), 9, ""}};
  const auto run = run_remote_eval(cfg, two, http_transport(cfg, std::nullopt));
  EXPECT_EQ(run.skipped, 2u);
  EXPECT_TRUE(run.transcript[0].skipped);
  EXPECT_EQ(run.transcript[0].status, 503);
  const auto* row = run.report.find(cfg.label());
  EXPECT_TRUE(row == nullptr || row->cells.empty() || row->cells.at("2D+").evaluated == 0);
}

TEST(Remote, ParallelKeepsOrder) {
  MockServer server;
  auto cfg = config_for(server);
  cfg.parallelism = 4;
  cfg.style = PromptStyle::kPlainFewshot;
  const auto tcs = cases(15);
  std::vector<std::size_t> order;
  const auto run =
      run_remote_eval(cfg, tcs, http_transport(cfg, std::nullopt), [&](const TranscriptEntry& e) { order.push_back(e.index); });
  ASSERT_EQ(order.size(), 30u);
  for (std::size_t i = 0; i < order.size(); ++i) EXPECT_EQ(order[i], i);
  EXPECT_EQ(run.report.find("Remote FS")->cells.at("2D+").accuracy, 100.0);
}

TEST(Remote, TransportFailureRecorded) {
  RemoteConfig cfg;
  cfg.endpoint = "http://127.0.0.1:1/none";
  cfg.retries = 0;
  cfg.timeout_seconds = 1;
  const std::vector<TestCase> one{{1, 2, Operation::add(), 3, ""}};
  const auto run = run_remote_eval(cfg, one, http_transport(cfg, std::nullopt));
  EXPECT_TRUE(run.transcript[0].skipped);
  EXPECT_EQ(run.transcript[0].status, 0);
  EXPECT_FALSE(run.transcript[0].error.empty());
}

TEST(Remote, TranscriptJsonRoundTrip) {
  TranscriptEntry e;
  e.index = 3;
  e.row = "Remote FS";
  e.task = "2D+";
  e.n1 = 1;
  e.n2 = 2;
  e.op = "add";
  e.expected = 3;
  e.prompt = "p\n";
  e.response = R"({"choices":[{"text":" 3"}]})";
  e.completion = " 3";
  e.extracted = 3;
  e.correct = true;
  e.attempts = 1;
  e.status = 200;
  const auto back = TranscriptEntry::from_json(e.to_json());
  EXPECT_EQ(back.to_json(), e.to_json());
  EXPECT_THROW(TranscriptEntry::from_json("{"), ParseError);
}
