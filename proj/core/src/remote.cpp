#include "numlab/remote.hpp"

#include <chrono>
#include <cstdlib>
#include <map>
#include <mutex>
#include <regex>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "numlab/error.hpp"

namespace numlab {

using nlohmann::json;

std::string_view prompt_style_id(PromptStyle s) {
  return s == PromptStyle::kPlainFewshot ? "plain-fewshot" : "decomposition-fewshot";
}

PromptStyle parse_prompt_style(std::string_view s) {
  if (s == "plain-fewshot" || s == "plain") return PromptStyle::kPlainFewshot;
  if (s == "decomposition-fewshot" || s == "decomposition") return PromptStyle::kDecompositionFewshot;
  throw ValidationError("unknown prompt style '" + std::string(s) + "' (expected plain-fewshot or decomposition-fewshot)");
}

void RemoteConfig::validate() const {
  if (endpoint.empty()) throw ValidationError("remote endpoint is not set");
  if (!(temperature >= 0.0)) throw ValidationError("temperature must be >= 0");
  if (max_cases < 1) throw ValidationError("max cases must be >= 1");
  if (max_tokens < 1) throw ValidationError("max tokens must be >= 1");
  if (!(timeout_seconds > 0.0)) throw ValidationError("timeout must be > 0");
  if (retries < 0) throw ValidationError("retries must be >= 0");
  if (!(min_delay_seconds >= 0.0)) throw ValidationError("minimum delay must be >= 0");
  if (parallelism < 1) throw ValidationError("parallelism must be >= 1");
  if (response_field.empty()) throw ValidationError("response field path is empty");
}

std::string RemoteConfig::label() const {
  if (!row_label.empty()) return row_label;
  return style == PromptStyle::kPlainFewshot ? "Remote FS" : "Remote FS decomp";
}

std::string remote_prompt(const TestCase& tc, PromptStyle style) {
  return style == PromptStyle::kPlainFewshot ? build_plain_fewshot_prompt(tc.n1, tc.n2, tc.op)
                                             : build_fewshot_prompt(tc.n1, tc.n2, tc.op);
}

std::string_view stop_marker(PromptStyle style) { return style == PromptStyle::kPlainFewshot ? "\n" : "###"; }

std::string apply_stop(std::string_view completion, PromptStyle style) {
  const auto at = completion.find(stop_marker(style));
  return std::string(completion.substr(0, at));
}

std::string request_body(const RemoteConfig& config, const std::string& prompt) {
  json body;
  if (!config.model.empty()) body["model"] = config.model;
  body["prompt"] = prompt;
  body["temperature"] = config.temperature;
  body["max_tokens"] = config.max_tokens;
  body["stop"] = json::array({std::string(stop_marker(config.style))});
  return body.dump();
}

std::optional<std::string> extract_field(std::string_view response_json, std::string_view path) {
  const auto doc = json::parse(response_json, nullptr, false);
  if (doc.is_discarded()) return std::nullopt;
  const json* node = &doc;
  std::size_t start = 0;
  while (start <= path.size()) {
    auto end = path.find('.', start);
    if (end == std::string_view::npos) end = path.size();
    const auto seg = std::string(path.substr(start, end - start));
    start = end + 1;
    if (node->is_array()) {
      char* stop = nullptr;
      const auto i = std::strtoul(seg.c_str(), &stop, 10);
      if (seg.empty() || *stop != '\0' || i >= node->size()) return std::nullopt;
      node = &(*node)[i];
    } else if (node->is_object()) {
      const auto it = node->find(seg);
      if (it == node->end()) return std::nullopt;
      node = &*it;
    } else {
      return std::nullopt;
    }
    if (end == path.size()) break;
  }
  if (!node->is_string()) return std::nullopt;
  return node->get<std::string>();
}

Transport http_transport(const RemoteConfig& config, std::optional<std::string> bearer_token) {
  static const std::regex kUrl(R"(^(https?)://([^/:]+)(:(\d+))?(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(config.endpoint, m, kUrl)) {
    throw ValidationError("endpoint '" + config.endpoint + "' is not an http(s) URL");
  }
  const std::string base = m[1].str() + "://" + m[2].str() + (m[3].matched ? m[3].str() : "");
  const std::string path = m[5].matched ? m[5].str() : "/";
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (m[1] == "https") throw ValidationError("this build has no TLS support; use an http endpoint");
#endif
  const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
      std::chrono::duration<double>(config.timeout_seconds));
  return [base, path, timeout, bearer_token](const std::string& body) {
    httplib::Client client(base);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers headers;
    if (bearer_token) headers.emplace("Authorization", "Bearer " + *bearer_token);
    const auto res = client.Post(path, headers, body, "application/json");
    if (!res) return HttpReply{0, "", httplib::to_string(res.error())};
    return HttpReply{res->status, res->body, ""};
  };
}

std::string TranscriptEntry::to_json() const {
  json j;
  j["index"] = index;
  j["row"] = row;
  j["task"] = task;
  j["n1"] = n1;
  j["n2"] = n2;
  j["op"] = op;
  j["expected"] = expected;
  j["style"] = style;
  j["prompt"] = prompt;
  j["request"] = request;
  j["attempts"] = attempts;
  j["status"] = status;
  j["response"] = response;
  j["error"] = error;
  j["skipped"] = skipped;
  j["completion"] = completion;
  j["extracted"] = extracted ? json(*extracted) : json(nullptr);
  j["verdict"] = skipped ? "skipped" : (correct ? "correct" : "incorrect");
  return j.dump();
}

TranscriptEntry TranscriptEntry::from_json(std::string_view line) {
  try {
    const auto j = json::parse(line);
    TranscriptEntry e;
    e.index = j.at("index").get<std::size_t>();
    e.row = j.at("row").get<std::string>();
    e.task = j.at("task").get<std::string>();
    e.n1 = j.at("n1").get<std::int64_t>();
    e.n2 = j.at("n2").get<std::int64_t>();
    e.op = j.at("op").get<std::string>();
    e.expected = j.at("expected").get<std::int64_t>();
    e.style = j.at("style").get<std::string>();
    e.prompt = j.at("prompt").get<std::string>();
    e.request = j.at("request").get<std::string>();
    e.attempts = j.at("attempts").get<int>();
    e.status = j.at("status").get<int>();
    e.response = j.at("response").get<std::string>();
    e.error = j.at("error").get<std::string>();
    e.skipped = j.at("skipped").get<bool>();
    e.completion = j.at("completion").get<std::string>();
    if (!j.at("extracted").is_null()) e.extracted = j.at("extracted").get<std::int64_t>();
    e.correct = j.at("verdict").get<std::string>() == "correct";
    return e;
  } catch (const json::exception& ex) {
    throw ParseError(std::string("bad transcript line: ") + ex.what(), 0);
  }
}

std::string transcript_jsonl(const std::vector<TranscriptEntry>& entries) {
  std::string out;
  for (const auto& e : entries) out += e.to_json() + "\n";
  return out;
}

namespace {

// Fills completion / extracted / correct from the raw response.
void score(TranscriptEntry& e, const std::string& response_field) {
  const auto style = parse_prompt_style(e.style);
  const auto text = extract_field(e.response, response_field);
  e.completion = text ? apply_stop(*text, style) : "";
  e.extracted = extract_answer(e.completion);
  e.correct = e.extracted.has_value() && *e.extracted == e.expected;
}

void tally(RemoteRun& run) {
  std::map<std::string, std::map<std::string, TaskTally>> rows;
  std::vector<std::string> order;
  for (const auto& e : run.transcript) {
    if (!rows.contains(e.row)) order.push_back(e.row);
    auto& t = rows[e.row][e.task];
    if (e.skipped) {
      ++run.skipped;
      continue;
    }
    ++t.evaluated;
    t.correct += e.correct;
  }
  for (const auto& label : order) {
    for (const auto& [task, t] : rows[label]) run.report.set(label, task, t);
  }
}

class Pacer {
 public:
  explicit Pacer(double seconds)
      : gap_(std::chrono::duration_cast<std::chrono::steady_clock::duration>(std::chrono::duration<double>(seconds))) {}
  void wait() {
    std::chrono::steady_clock::time_point at;
    {
      std::lock_guard lock(mutex_);
      const auto now = std::chrono::steady_clock::now();
      at = std::max(now, next_);
      next_ = at + gap_;
    }
    std::this_thread::sleep_until(at);
  }

 private:
  std::chrono::steady_clock::duration gap_;
  std::chrono::steady_clock::time_point next_{};
  std::mutex mutex_;
};

}  // namespace

RemoteRun run_remote_eval(const RemoteConfig& config, const std::vector<TestCase>& cases, const Transport& transport,
                          const std::function<void(const TranscriptEntry&)>& on_entry) {
  config.validate();
  std::vector<const TestCase*> selected;
  std::map<std::string, std::size_t> per_task;
  for (const auto& tc : cases) {
    if (per_task[task_key(tc.op, tc.band())]++ < config.max_cases) selected.push_back(&tc);
  }

  RemoteRun run;
  run.transcript.resize(selected.size());
  std::vector<bool> done(selected.size(), false);
  std::size_t flushed = 0;
  std::mutex mutex;
  Pacer pacer(config.min_delay_seconds);

  auto work = [&](std::size_t i) {
    const auto& tc = *selected[i];
    TranscriptEntry e;
    e.index = i;
    e.row = config.label();
    e.task = task_key(tc.op, tc.band());
    e.n1 = tc.n1;
    e.n2 = tc.n2;
    e.op = std::string(tc.op.id());
    e.expected = tc.expected;
    e.style = std::string(prompt_style_id(config.style));
    e.prompt = remote_prompt(tc, config.style);
    e.request = request_body(config, e.prompt);
    e.skipped = true;
    for (int attempt = 0; attempt <= config.retries; ++attempt) {
      pacer.wait();
      ++e.attempts;
      const auto reply = transport(e.request);
      e.status = reply.status;
      e.response = reply.body;
      e.error = reply.error;
      if (reply.status >= 200 && reply.status < 300) {
        if (extract_field(reply.body, config.response_field)) {
          e.skipped = false;
          e.error.clear();
          break;
        }
        e.error = "response has no string at '" + config.response_field + "'";
      } else if (reply.status != 0) {
        e.error = "HTTP " + std::to_string(reply.status);
      }
    }
    if (!e.skipped) score(e, config.response_field);

    std::lock_guard lock(mutex);
    run.transcript[i] = std::move(e);
    done[i] = true;
    while (flushed < done.size() && done[flushed]) {
      if (on_entry) on_entry(run.transcript[flushed]);
      ++flushed;
    }
  };

  const unsigned workers = std::min<unsigned>(config.parallelism, static_cast<unsigned>(std::max<std::size_t>(selected.size(), 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < selected.size(); ++i) work(i);
  } else {
    std::vector<std::jthread> pool;
    std::exception_ptr failure;
    std::mutex failure_mutex;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < selected.size(); i += workers) work(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      });
    }
    pool.clear();
    if (failure) std::rethrow_exception(failure);
  }
  tally(run);
  return run;
}

RemoteRun replay_transcript(std::string_view jsonl, const std::string& response_field) {
  RemoteRun run;
  std::size_t line_no = 0;
  for (std::size_t start = 0; start < jsonl.size();) {
    auto end = jsonl.find('\n', start);
    if (end == std::string_view::npos) end = jsonl.size();
    const auto line = jsonl.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.empty()) continue;
    TranscriptEntry e;
    try {
      e = TranscriptEntry::from_json(line);
    } catch (const ParseError& ex) {
      throw ParseError("transcript line " + std::to_string(line_no) + ": " + ex.what(), 0);
    }
    if (!e.skipped) score(e, response_field);
    run.transcript.push_back(std::move(e));
  }
  tally(run);
  return run;
}

}  // namespace numlab
