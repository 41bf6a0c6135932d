#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "numlab/checkpoint.hpp"
#include "numlab/error.hpp"
#include "numlab/model.hpp"
#include "numlab/rng.hpp"
#include "support/gradcheck.hpp"

using namespace numlab;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_model = 32;
  c.d_ff = 64;
  c.max_seq_len = 16;
  c.vocab_size = 11;
  return c;
}

}  // namespace

TEST(Model, GradientsMatchFiniteDifferences) {
  Rng rng(5);
  for (int trial = 0; trial < 3; ++trial) {
    auto m = Transformer<double>::initialize(small_config(), 3 + static_cast<std::uint64_t>(trial));
    // Larger weights than the init keep every path active.
    for (auto& p : m.params()) p *= 5;
    const auto batch = check::random_batch(rng, 11, 10);
    EXPECT_LT(check::worst_gradient_error(m, batch), 1e-4) << "trial " << trial;
  }
}

TEST(Model, GradientsWithLossMaskAndDropoutOff) {
  auto m = Transformer<double>::initialize(small_config(), 9);
  for (auto& p : m.params()) p *= 5;
  const std::vector<std::vector<TokenId>> batch{{1, 4, 5, 6, 7, 2}, {1, 9, 3, 2}};
  const std::vector<std::size_t> from{3, 1};
  EXPECT_LT(check::worst_gradient_error(m, batch, from), 1e-4);
}

TEST(Model, ParameterCountFormula) {
  const auto c = small_config();
  const auto m = Transformer<float>::initialize(c, 1);
  EXPECT_EQ(m.params().size(), c.parameter_count());
  const std::size_t V = 11, S = 16, d = 32, f = 64, L = 2;
  EXPECT_EQ(c.parameter_count(), V * d + S * d + L * (4 * d * d + 2 * d * f + 9 * d + f) + 2 * d + d * V);
  std::size_t total = 0;
  for (const auto& t : m.layout()) total += t.size();
  EXPECT_EQ(total, c.parameter_count());
}

TEST(Model, UniformLogitsGiveLogVocab) {
  auto m = Transformer<double>::initialize(small_config(), 1);
  const auto& head = m.tensor_info("lm_head.w");
  for (std::size_t i = 0; i < head.size(); ++i) m.params()[head.offset + i] = 0;
  EXPECT_NEAR(m.loss({{1, 3, 4, 5}}), std::log(11.0), 1e-12);
}

TEST(Model, DuplicatedBatchSameMeanLoss) {
  const auto m = Transformer<double>::initialize(small_config(), 2);
  const std::vector<std::vector<TokenId>> b{{1, 3, 4, 5, 2}, {1, 7, 2}};
  auto bb = b;
  bb.insert(bb.end(), b.begin(), b.end());
  EXPECT_NEAR(m.loss(b), m.loss(bb), 1e-12);
}

TEST(Model, Causality) {
  const auto m = Transformer<double>::initialize(small_config(), 4);
  const std::vector<TokenId> a{1, 3, 4, 5, 6, 7};
  auto b = a;
  b[4] = 9;
  b[5] = 10;
  const auto la = m.forward(a);
  const auto lb = m.forward(b);
  EXPECT_EQ(la.topRows(4), lb.topRows(4));
  EXPECT_NE(la.row(4), lb.row(4));
}

TEST(Model, SoftmaxRowsAreDistributions) {
  const auto m = Transformer<float>::initialize(small_config(), 4);
  const auto logits = m.forward(std::vector<TokenId>{1, 5, 6});
  for (int r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r).cast<double>();
    const double mx = row.maxCoeff();
    const double z = (row.array() - mx).exp().sum();
    EXPECT_TRUE(std::isfinite(z));
    EXPECT_GE(z, 1.0);
  }
}

TEST(Model, DecoderMatchesForward) {
  auto c = small_config();
  const auto m = Transformer<double>::initialize(c, 6);
  const std::vector<TokenId> ids{1, 3, 4, 5, 6, 7, 8};
  const auto full = m.forward(ids);
  Transformer<double>::Decoder dec(m);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    const auto& row = dec.push(ids[t]);
    EXPECT_LT((row - full.row(static_cast<Eigen::Index>(t))).cwiseAbs().maxCoeff(), 1e-12);
  }
  EXPECT_EQ(dec.length(), ids.size());
}

TEST(Model, SequenceBoundsValidated) {
  const auto m = Transformer<float>::initialize(small_config(), 6);
  EXPECT_THROW(m.forward(std::vector<TokenId>{}), ValidationError);
  EXPECT_THROW(m.forward(std::vector<TokenId>(17, 3)), ValidationError);
}

TEST(Model, ConfigValidation) {
  auto c = small_config();
  c.n_heads = 3;
  EXPECT_THROW(c.validate(), ValidationError);
  c = small_config();
  c.dropout = 1.5;
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(Model, SaliencySumsToOne) {
  const auto m = Transformer<double>::initialize(small_config(), 8);
  const std::vector<TokenId> ids{1, 3, 4, 5, 6};
  const auto s = m.saliency(ids, 4, 1);
  ASSERT_EQ(s.size(), 3u);
  double sum = 0;
  for (double v : s) {
    EXPECT_GE(v, 0.0);
    sum += v;
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  const auto dir = std::filesystem::temp_directory_path() / "numlab_ckpt_test";
  std::filesystem::create_directories(dir);
  for (auto precision : {Precision::kStandard, Precision::kWide}) {
    const auto m = Transformer<float>::initialize(small_config(), 12);
    auto adam = AdamState<float>::zeros(m.params().size());
    adam.step = 3;
    auto ck = Checkpoint::capture(m, &adam, 77);
    ck.precision = precision;
    ck.save(dir / "m.ckpt");
    const auto back = Checkpoint::load(dir / "m.ckpt");
    EXPECT_EQ(back, ck);
    const auto m2 = back.model<float>();
    const std::vector<TokenId> ids{1, 2, 3, 4};
    EXPECT_EQ(m.forward(ids), m2.forward(ids));
  }
  std::vector<char> junk{'x', 'y'};
  EXPECT_THROW(Checkpoint::deserialize(junk), ParseError);
}
