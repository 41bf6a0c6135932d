#include <gtest/gtest.h>

#include "numlab/error.hpp"
#include "numlab/saliency.hpp"

using namespace numlab;

namespace {

const Tokenizer& tokenizer() {
  static const Tokenizer tok = [] {
    std::vector<std::string> lines;
    for (int a : {12, 47, 85, 30, 66})
      for (int b : {9, 58, 71})
        lines.push_back(render_observation(a, b, Operation::add(), Approach::decomposition()).text);
    return Tokenizer::train(lines, 120);
  }();
  return tok;
}

Transformer<double> model() {
  ModelConfig c;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_model = 16;
  c.d_ff = 32;
  c.max_seq_len = 160;
  c.vocab_size = static_cast<int>(tokenizer().vocab_size());
  return Transformer<double>::initialize(c, 2);
}

}  // namespace

TEST(Saliency, DigitTokens) {
  EXPECT_TRUE(is_digit_token("7"));
  EXPECT_TRUE(is_digit_token(" 42"));
  EXPECT_FALSE(is_digit_token(" "));
  EXPECT_FALSE(is_digit_token("4."));
  EXPECT_FALSE(is_digit_token(" units"));
}

TEST(Saliency, LocatesUnitsDigitsInSumLine) {
  const auto& tok = tokenizer();
  const auto text = render_observation(47, 58, Operation::add(), Approach::decomposition()).text;
  std::vector<TokenId> ids{Tokenizer::kBos};
  const auto enc = tok.encode(text);
  ids.insert(ids.end(), enc.begin(), enc.end());
  const auto found = find_units_digit_tokens(tok, ids);
  ASSERT_TRUE(found.has_value());
  // "Sum 7 units, 4 tens + 8 units, 5 tens = 5 units, 0 tens, 1 hundreds"
  EXPECT_EQ(tok.token(ids[found->operand1]).back(), '7');
  EXPECT_EQ(tok.token(ids[found->operand2]).back(), '8');
  EXPECT_EQ(tok.token(ids[found->result]).back(), '5');
  EXPECT_LT(found->operand1, found->operand2);
  EXPECT_LT(found->operand2, found->result);
  const auto sum_at = text.find("Sum ");
  EXPECT_GT(tok.decode(std::span(ids).first(found->operand1)).size(), sum_at);

  // Earlier copies: prompt number, translated number, its "units" term.
  for (const auto& [all, digit] : {std::pair{found->operand1_all, '7'}, std::pair{found->operand2_all, '8'}}) {
    EXPECT_GE(all.size(), 2u);
    EXPECT_EQ(all.back(), all == found->operand1_all ? found->operand1 : found->operand2);
    for (const auto i : all) EXPECT_EQ(tok.token(ids[i]).back(), digit) << i;
  }
  EXPECT_LT(found->operand1_all.front(), found->operand2_all.front());
}

TEST(Saliency, NoSumLineNotLocated) {
  const auto& tok = tokenizer();
  std::vector<TokenId> ids{Tokenizer::kBos};
  const auto enc = tok.encode("Compute with pipeline 12 plus 9.");
  ids.insert(ids.end(), enc.begin(), enc.end());
  EXPECT_FALSE(find_units_digit_tokens(tok, ids).has_value());
}

TEST(Saliency, ReportPanels) {
  const auto m = model();
  const auto r = saliency_report(m, tokenizer(), "Compute with pipeline 12 plus 9.", {0, 2}, 5);
  ASSERT_EQ(r.panels.size(), 2u);
  EXPECT_EQ(r.prompt_tokens, tokenizer().encode(r.prompt).size());
  for (const auto& p : r.panels) {
    EXPECT_EQ(p.scores.size(), p.position - 1);
    EXPECT_EQ(p.tokens.size(), p.scores.size());
    double sum = 0;
    for (double s : p.scores) sum += s;
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
  EXPECT_EQ(r.panels[1].position, r.panels[0].position + 2);
  EXPECT_NE(saliency_text(r).find("<- target"), std::string::npos);
  EXPECT_NE(saliency_html(r).find("<html"), std::string::npos);
  EXPECT_THROW(saliency_report(m, tokenizer(), "Compute with pipeline 12 plus 9.", {50}, 5), ValidationError);
}

TEST(Saliency, ProbeOnUntrainedModelIsNotLocated) {
  const auto m = model();
  const auto p = probe_units_saliency(m, tokenizer(), "Compute with pipeline 12 plus 9.", 8);
  EXPECT_FALSE(p.located);
  EXPECT_FALSE(p.hit);
}
