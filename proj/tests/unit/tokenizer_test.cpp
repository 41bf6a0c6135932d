#include <gtest/gtest.h>

#include "numlab/arith_format.hpp"
#include "numlab/datagen.hpp"
#include "numlab/error.hpp"
#include "numlab/tokenizer.hpp"

using namespace numlab;

namespace {

std::vector<std::string> corpus(Approach a, std::size_t n) {
  SamplingSpec spec{Operation::add(), {{2, n}, {4, n}}, 1};
  std::vector<std::string> lines;
  for (const auto& p : sample_pairs(spec)) lines.push_back(render_observation(p.n1, p.n2, Operation::add(), a).text);
  return lines;
}

}  // namespace

TEST(Tokenizer, SpecialIdsAndBase) {
  const auto t = Tokenizer::characters("ba ");
  EXPECT_EQ(t.vocab_size(), 6u);
  EXPECT_EQ(t.base_chars(), " ab");
  EXPECT_TRUE(t.is_special(Tokenizer::kEos));
  EXPECT_EQ(t.encode("ab a"), (std::vector<TokenId>{4, 5, 3, 4}));
}

TEST(Tokenizer, MergesMostFrequentPair) {
  const auto t = Tokenizer::train({"aab aab aab", "ab"}, 100);
  ASSERT_FALSE(t.merges().empty());
  // "ab" occurs 4 times, "aa" 3 times.
  EXPECT_EQ(t.token(t.merges()[0].result), "ab");
}

TEST(Tokenizer, TieBreakIsLexicographic) {
  const auto t = Tokenizer::train({"xy xy ab ab"}, 5 + 3 + 1);
  ASSERT_EQ(t.merges().size(), 1u);
  EXPECT_EQ(t.token(t.merges()[0].result), " a");
}

TEST(Tokenizer, MergesNeverCrossSpaces) {
  const auto lines = corpus(Approach::spaced(), 300);
  const auto t = Tokenizer::train(lines, 300);
  for (TokenId id = 0; id < static_cast<TokenId>(t.vocab_size()); ++id) {
    const auto& s = t.token(id);
    if (t.is_special(id) || s.size() < 2) continue;
    EXPECT_EQ(s.find(' ', 1), std::string::npos) << s;
  }
  EXPECT_EQ(t.encode("2 5 0 3").size(), 4u);
}

TEST(Tokenizer, BaselineCorpusCompressesNumbers) {
  const auto lines = corpus(Approach::baseline(), 1000);
  const auto t = Tokenizer::train(lines, 300);
  EXPECT_LT(t.encode("2503").size(), t.encode("2 5 0 3").size());
  for (const auto& l : lines) ASSERT_EQ(t.decode(t.encode(l)), l);
}

TEST(Tokenizer, LosslessOnDecompositionCorpus) {
  const auto lines = corpus(Approach::decomposition(), 500);
  const auto t = Tokenizer::train(lines, 300);
  EXPECT_LE(t.vocab_size(), 300u);
  for (const auto& l : lines) ASSERT_EQ(t.decode(t.encode(l)), l);
}

TEST(Tokenizer, UnknownCharacterThrows) {
  const auto t = Tokenizer::characters("0123456789 ");
  EXPECT_THROW(t.encode("12a"), ValidationError);
}

TEST(Tokenizer, SerializeRoundTrip) {
  const auto lines = corpus(Approach::decomposition(), 100);
  const auto t = Tokenizer::train(lines, 200);
  const auto back = Tokenizer::deserialize(t.serialize());
  EXPECT_EQ(back, t);
  for (const auto& l : lines) ASSERT_EQ(back.encode(l), t.encode(l));
  EXPECT_THROW(Tokenizer::deserialize("garbage"), ParseError);
}

TEST(Tokenizer, TrainingIsDeterministic) {
  const auto lines = corpus(Approach::baseline(), 200);
  EXPECT_EQ(Tokenizer::train(lines, 150).serialize(), Tokenizer::train(lines, 150).serialize());
}

TEST(Tokenizer, DecodeSkipsSpecials) {
  const auto t = Tokenizer::characters("ab");
  const std::vector<TokenId> ids{Tokenizer::kBos, 3, 4, Tokenizer::kEos};
  EXPECT_EQ(t.decode(ids), "ab");
}
