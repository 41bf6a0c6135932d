#pragma once

#include <optional>
#include <string>
#include <vector>

#include "numlab/eval.hpp"

namespace numlab {

// Scores of the tokens preceding one generated token. BOS is left out.
struct SaliencyPanel {
  std::size_t generated_index = 0;  // 0 = first generated token
  std::size_t position = 0;         // index into ids (BOS = 0)
  std::string target;
  std::vector<std::string> tokens;
  std::vector<double> scores;
};

struct SaliencyReport {
  std::string prompt;
  std::string continuation;
  std::vector<TokenId> ids;  // BOS + prompt + generated
  std::size_t prompt_tokens = 0;
  std::vector<SaliencyPanel> panels;
};

// Greedy-decodes `prompt`, then computes one panel per requested generated
// token index. Throws ValidationError for an index past the generation.
template <typename Scalar>
SaliencyReport saliency_report(const Transformer<Scalar>& model, const Tokenizer& tokenizer, const std::string& prompt,
                               const std::vector<std::size_t>& generated_indices,
                               std::size_t max_new_tokens = kDefaultMaxNewTokens);

// One column per panel: token, score (6 decimals), bar; the target is marked.
std::string saliency_text(const SaliencyReport& report);
std::string saliency_html(const SaliencyReport& report);

// Locates, in the Sum line of a generated decomposition observation, the
// tokens carrying the units digit of each operand and of the result.
// The *_all lists add every earlier copy of that operand's units digit: the
// number in the prompt and both sides of its translation line. Copies fused
// into a non-digit token are left out.
struct UnitsDigitTokens {
  std::size_t operand1 = 0;
  std::size_t operand2 = 0;
  std::size_t result = 0;
  std::vector<std::size_t> operand1_all;
  std::vector<std::size_t> operand2_all;
};
std::optional<UnitsDigitTokens> find_units_digit_tokens(const Tokenizer& tokenizer, const std::vector<TokenId>& ids);

// A token made of digits, optionally preceded by spaces.
bool is_digit_token(std::string_view token);

struct UnitsProbe {
  bool located = false;
  bool hit = false;  // both operands have a units-digit copy in the top 3 digit tokens
  int rank_operand1 = -1;  // 0-based rank among digit tokens, best copy
  int rank_operand2 = -1;
  // Same, counting only the Sum-line copies.
  bool sum_line_hit = false;
};

// Generates the decomposition observation for the prompt and ranks the
// digit tokens before the result's units digit by saliency.
template <typename Scalar>
UnitsProbe probe_units_saliency(const Transformer<Scalar>& model, const Tokenizer& tokenizer, const std::string& prompt,
                                std::size_t max_new_tokens = kDefaultMaxNewTokens);

}  // namespace numlab
