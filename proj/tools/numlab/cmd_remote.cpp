#include <cstdlib>
#include <fstream>
#include <ostream>

#include "commands.hpp"
#include "numlab/error.hpp"
#include "numlab/io.hpp"
#include "util.hpp"

namespace numlab::cli {

void RemoteOptions::add_to(CLI::App& app) {
  app.add_option("--endpoint", config.endpoint, "Completion endpoint URL (http://host:port/path)");
  app.add_option("--style", style, "Prompt style: plain-fewshot or decomposition-fewshot")
      ->check(CLI::IsMember({"plain-fewshot", "decomposition-fewshot"}));
  app.add_option("--tests", tests, "Test-set files; the first --max-cases of each task are sent");
  app.add_option("--token-env", config.token_env, "Environment variable holding the bearer token ('' = none)");
  app.add_option("--temperature", config.temperature, "Sampling temperature");
  app.add_option("--max-cases", config.max_cases, "Cases per task");
  app.add_option("--max-tokens", config.max_tokens, "Completion length limit sent with each request");
  app.add_option("--timeout", config.timeout_seconds, "Request timeout in seconds");
  app.add_option("--retries", config.retries, "Extra attempts per request before the case is skipped");
  app.add_option("--min-delay", config.min_delay_seconds, "Minimum seconds between request starts");
  app.add_option("--response-field", config.response_field, "Dot path of the completion text in the response");
  app.add_option("--model-name", config.model, "Value of the request's \"model\" field (omitted if empty)");
  app.add_option("--parallel", config.parallelism, "Concurrent requests");
  app.add_option("--label", config.row_label, "Report row label");
  app.add_option("--replay", replay, "Re-score a transcript offline instead of sending requests");
}

void RemoteOptions::run(const Context& ctx) const {
  const auto& dir = ctx.globals.out;
  RemoteRun result;
  if (!replay.empty()) {
    require_file(replay, "numlab remote");
    result = replay_transcript(read_file(replay), config.response_field);
  } else {
    RemoteConfig cfg = config;
    cfg.style = parse_prompt_style(style);
    cfg.validate();
    std::optional<std::string> token;
    if (!cfg.token_env.empty()) {
      const char* v = std::getenv(cfg.token_env.c_str());
      if (v == nullptr || *v == '\0') {
        throw RemoteError("environment variable " + cfg.token_env + " is not set (use --token-env '' for no auth)");
      }
      token = v;
    }
    const auto cases = load_cases(tests, "", ctx.log);
    if (cases.empty()) throw ValidationError("remote needs --tests");

    std::filesystem::create_directories(dir);
    std::ofstream transcript(dir / "transcript.jsonl", std::ios::binary | std::ios::trunc);
    if (!transcript) throw IoError("cannot write " + (dir / "transcript.jsonl").string());
    result = run_remote_eval(cfg, cases, http_transport(cfg, token), [&](const TranscriptEntry& e) {
      transcript << e.to_json() << "\n";
      transcript.flush();
      if (e.skipped) ctx.log << "case " << e.index << " skipped after " << e.attempts << " attempts: " << e.error << "\n";
    });
    if (!transcript) throw IoError("write failed: " + (dir / "transcript.jsonl").string());
  }

  emit_report(result.report, ReportFormat::kCsv, dir / "report.csv");
  emit_report(result.report, ReportFormat::kText, dir / "report.txt");
  emit_report(result.report, ReportFormat::kHtml, dir / "report.html");
  ctx.write_manifest(dir);
  ctx.out << result.report.to_text();
  if (result.skipped > 0) {
    // Skipped cases are left out of the denominators, so say so loudly.
    ctx.out << "WARNING: " << result.skipped << " of " << result.transcript.size()
            << " cases were never answered and are excluded from the accuracies\n";
  }
}

}  // namespace numlab::cli
