#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "numlab/datagen.hpp"
#include "numlab/report.hpp"

namespace numlab {

enum class PromptStyle { kPlainFewshot, kDecompositionFewshot };

std::string_view prompt_style_id(PromptStyle s);  // "plain-fewshot" / "decomposition-fewshot"
PromptStyle parse_prompt_style(std::string_view s);

struct RemoteConfig {
  std::string endpoint;  // http://host:port/path (https if built with TLS)
  // Environment variable holding a bearer token. Empty = send no auth header.
  std::string token_env = "NUMLAB_REMOTE_TOKEN";
  double temperature = 0.7;
  std::size_t max_cases = 100;  // per task, first N cases of the test set
  int max_tokens = 256;
  double timeout_seconds = 60.0;
  int retries = 3;  // extra attempts after the first
  double min_delay_seconds = 0.0;
  // Dot path into the response JSON; numeric segments index arrays.
  std::string response_field = "choices.0.text";
  PromptStyle style = PromptStyle::kDecompositionFewshot;
  std::string model;  // sent as "model" when non-empty
  unsigned parallelism = 1;
  std::string row_label;  // defaults from the style when empty

  void validate() const;
  std::string label() const;
};

// What one case sends: the prompt, and the stop marker that ends a completion.
std::string remote_prompt(const TestCase& tc, PromptStyle style);
std::string_view stop_marker(PromptStyle style);
// Cuts a raw completion at the style's stop marker.
std::string apply_stop(std::string_view completion, PromptStyle style);

// JSON request body for one prompt.
std::string request_body(const RemoteConfig& config, const std::string& prompt);
// Follows the dot path; nullopt if missing or not a string.
std::optional<std::string> extract_field(std::string_view response_json, std::string_view path);

struct HttpReply {
  int status = 0;  // 0 = transport failure
  std::string body;
  std::string error;
};
// POSTs one JSON body. Tests substitute their own.
using Transport = std::function<HttpReply(const std::string& body)>;
Transport http_transport(const RemoteConfig& config, std::optional<std::string> bearer_token);

struct TranscriptEntry {
  std::size_t index = 0;
  std::string row;
  std::string task;
  std::int64_t n1 = 0;
  std::int64_t n2 = 0;
  std::string op;
  std::int64_t expected = 0;
  std::string style;
  std::string prompt;
  std::string request;
  int attempts = 0;
  int status = 0;
  std::string response;  // raw body of the last attempt
  std::string error;
  bool skipped = false;  // never answered
  std::string completion;
  std::optional<std::int64_t> extracted;
  bool correct = false;

  std::string to_json() const;
  static TranscriptEntry from_json(std::string_view line);
};

struct RemoteRun {
  std::vector<TranscriptEntry> transcript;  // ordered by case index
  EvalReport report;
  std::size_t skipped = 0;
};

// Runs the first max_cases cases of each task. Each entry is handed to
// on_entry in case-index order as soon as it and all earlier ones finish.
RemoteRun run_remote_eval(const RemoteConfig& config, const std::vector<TestCase>& cases, const Transport& transport,
                          const std::function<void(const TranscriptEntry&)>& on_entry = {});

// Re-scores a transcript from its raw responses, with no network access.
// Skipped entries are left out of the denominators.
RemoteRun replay_transcript(std::string_view jsonl, const std::string& response_field);
std::string transcript_jsonl(const std::vector<TranscriptEntry>& entries);

}  // namespace numlab
