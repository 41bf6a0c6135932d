#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "numlab/arith_format.hpp"
#include "numlab/datagen.hpp"
#include "numlab/model.hpp"
#include "numlab/tokenizer.hpp"

namespace numlab {

inline constexpr std::size_t kDefaultMaxNewTokens = 192;

struct Generation {
  std::string prompt;
  std::string continuation;
  // Budget or context exhausted before EOS / newline.
  bool truncated = false;

  std::string text() const { return prompt + continuation; }
};

// Appends the argmax token (ties go to the lowest id) until EOS, a token
// containing a newline, max_new_tokens, or the model's context length.
// Text from the first newline on is dropped from the continuation.
template <typename Scalar>
Generation greedy_decode(const Transformer<Scalar>& model, const Tokenizer& tokenizer, std::string_view prompt,
                         std::size_t max_new_tokens = kDefaultMaxNewTokens);

// Token-level variant; returns BOS + prompt + generated ids.
template <typename Scalar>
std::vector<TokenId> greedy_decode_ids(const Transformer<Scalar>& model, std::span<const TokenId> prompt_ids,
                                       std::size_t max_new_tokens, const Tokenizer& tokenizer, bool* truncated = nullptr);

// Anything that continues a prompt: a trained model, or a fixture.
class Generator {
 public:
  virtual ~Generator() = default;
  virtual Generation generate(const std::string& prompt) const = 0;
};

template <typename Scalar>
class ModelGenerator final : public Generator {
 public:
  ModelGenerator(const Transformer<Scalar>& model, const Tokenizer& tokenizer,
                 std::size_t max_new_tokens = kDefaultMaxNewTokens)
      : model_(model), tokenizer_(tokenizer), max_new_tokens_(max_new_tokens) {}
  Generation generate(const std::string& prompt) const override {
    return greedy_decode(model_, tokenizer_, prompt, max_new_tokens_);
  }

 private:
  const Transformer<Scalar>& model_;
  const Tokenizer& tokenizer_;
  std::size_t max_new_tokens_;
};

// Emits the exact ground-truth continuation for any well-formed prompt prefix.
class OracleGenerator final : public Generator {
 public:
  Generation generate(const std::string& prompt) const override;
};

// Emits nothing.
class EmptyGenerator final : public Generator {
 public:
  Generation generate(const std::string& prompt) const override { return {prompt, "", false}; }
};

struct PromptOperands {
  std::int64_t n1 = 0;
  std::int64_t n2 = 0;
  Operation op;
  Approach approach;
};

// Inverse of prompt_prefix(); nullopt if the prompt is not a prefix prompt.
std::optional<PromptOperands> parse_prompt_prefix(std::string_view prompt);

// Table-2 column key, e.g. "5D+", "2D-", "2Dx".
std::string task_key(Operation op, int band);
const std::vector<std::string>& task_columns();

struct CaseOutcome {
  std::size_t index = 0;
  std::string task;
  std::string prompt;
  std::string generation;
  std::int64_t expected = 0;
  std::optional<std::int64_t> extracted;
  bool correct = false;
  bool truncated = false;
};

struct TaskTally {
  std::size_t correct = 0;
  std::size_t evaluated = 0;
  double accuracy() const { return evaluated == 0 ? 0.0 : 100.0 * static_cast<double>(correct) / static_cast<double>(evaluated); }
};

struct EvalResult {
  std::map<std::string, TaskTally> tasks;
  std::vector<CaseOutcome> outcomes;  // in test-case order
};

// Prompts each case with the approach's prefix and scores exact match of the
// trailing integer of the generated continuation. `workers` > 1 evaluates
// cases concurrently; results are order-stable.
EvalResult evaluate(const Generator& generator, const std::vector<TestCase>& cases, Approach approach,
                    unsigned workers = 1);

// One JSON object per line: prompt, generation, expected, extracted.
std::string failure_samples_jsonl(const EvalResult& result);

}  // namespace numlab
