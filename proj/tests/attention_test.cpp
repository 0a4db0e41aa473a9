#include <gtest/gtest.h>

#include "echoef/attention.hpp"
#include "tca_oracle.hpp"

using namespace echoef;
using namespace echoef::attention;

namespace {

Tensor<double> random_map(const Shape& s, Rng& rng) {
  Tensor<double> t(s);
  std::normal_distribution<double> d(0, 1);
  for (auto& v : t.values()) v = d(rng);
  return t;
}

TcaParams<double> random_params(std::size_t c, std::size_t r, Rng& rng, bool random_bias = true) {
  TcaParams<double> p("tca", c, r);
  p.init(rng);
  if (random_bias) {
    std::uniform_real_distribution<double> d(-0.5, 0.5);
    for (auto& v : p.reduce.bias.value.values()) v = d(rng);
    for (auto& v : p.expand.bias.value.values()) v = d(rng);
  }
  return p;
}

Tensor<double> temporally_constant(std::size_t t, std::size_t h, std::size_t w, std::size_t c, Rng& rng) {
  Tensor<double> base = random_map({1, h, w, c}, rng), out({t, h, w, c});
  for (std::size_t f = 0; f < t; ++f) std::copy(base.values().begin(), base.values().end(), out.data() + f * base.size());
  return out;
}

}  // namespace

TEST(TemporalPool, ReplicatePaddedExample) {
  Tensor<double> x({3, 1, 1, 1}, std::vector<double>{0, 1, 2});
  const auto p = temporal_pool(x, 3);
  EXPECT_EQ(p.max.storage(), (std::vector<double>{1, 2, 2}));
  EXPECT_NEAR(p.mean[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(p.mean[1], 1.0, 1e-15);
  EXPECT_NEAR(p.mean[2], 5.0 / 3.0, 1e-15);
}

TEST(TemporalPool, ConstantAndIdentityWindow) {
  Rng rng(1);
  const auto c = temporally_constant(5, 2, 3, 4, rng);
  const auto p = temporal_pool(c, 3);
  EXPECT_LT(max_abs_diff(p.max, c), 1e-15);
  EXPECT_LT(max_abs_diff(p.mean, c), 1e-15);
  const auto x = random_map({4, 2, 2, 3}, rng);
  const auto q = temporal_pool(x, 1);
  EXPECT_EQ(q.max, x);
  EXPECT_EQ(q.mean, x);
}

TEST(TemporalPool, EvenWindowRejected) {
  Tensor<double> x({3, 1, 1, 1});
  EXPECT_THROW(temporal_pool(x, 2), InvalidConfig);
  EXPECT_THROW(AttentionBlock<double>("b", Mode::Tca, 16, 16, 4), InvalidConfig);
}

TEST(TcaWeights, ConstantInputZeroBiasGivesHalf) {
  Rng rng(2);
  const auto x = temporally_constant(4, 3, 3, 16, rng);
  const auto p = random_params(16, 4, rng, false);
  const auto e = tca_weights(x, p);
  for (double v : e.values()) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(TcaWeights, ConstantInputIsTimeInvariant) {
  Rng rng(3);
  const auto x = temporally_constant(5, 2, 2, 8, rng);
  const auto p = random_params(8, 2, rng);
  const auto e = tca_weights(x, p);
  for (std::size_t t = 1; t < 5; ++t)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(e.at(t, c), e.at(0, c));
}

TEST(TcaWeights, StrictlyInsideUnitInterval) {
  Rng rng(4);
  for (int k = 0; k < 10; ++k) {
    const auto x = random_map({4, 2, 3, 16}, rng);
    const auto e = tca_weights(x, random_params(16, 4, rng));
    for (double v : e.values()) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST(TcaWeights, MatchesOracleTwoFramesSixteenChannels) {
  Rng rng(5);
  const auto x = random_map({2, 1, 1, 16}, rng);
  const auto p = random_params(16, 16, rng);
  const auto e = tca_weights(x, p);
  const auto ref = testing_util::tca_oracle(x, p, 3);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(e[i], ref[i], 1e-6);
}

TEST(TcaWeights, MatchesOracleOnRandomShapes) {
  Rng rng(6);
  for (int k = 0; k < 10; ++k) {
    const std::size_t t = 1 + rng() % 6, h = 1 + rng() % 4, w = 1 + rng() % 4;
    const auto x = random_map({t, h, w, 8}, rng);
    const auto p = random_params(8, 2, rng);
    for (int window : {1, 3, 5}) {
      const auto e = tca_weights(x, p, window);
      const auto ref = testing_util::tca_oracle(x, p, window);
      for (std::size_t i = 0; i < ref.size(); ++i) ASSERT_NEAR(e[i], ref[i], 1e-12);
    }
  }
}

TEST(TcaWeights, NonDivisibleChannelsRejected) {
  EXPECT_THROW(TcaParams<double>("t", 12, 8), InvalidConfig);
  EXPECT_THROW(AttentionBlock<double>("b", Mode::Se, 12, 8), InvalidConfig);
}

TEST(TcaApply, ResidualIdentities) {
  Rng rng(7);
  const auto x = random_map({3, 2, 2, 4}, rng);
  Tensor<double> zero({3, 4}), one({3, 4});
  one.fill(1.0);
  EXPECT_EQ(tca_apply(x, zero), x);
  auto twice = x;
  twice *= 2.0;
  EXPECT_EQ(tca_apply(x, one), twice);
  const Tensor<double> z(x.shape());
  EXPECT_EQ(tca_apply(z, one), z);
  EXPECT_THROW(tca_apply(x, Tensor<double>({2, 4})), InvalidInput);
}

TEST(TcaApply, RatioBetweenOneAndTwo) {
  Rng rng(8);
  const auto x = random_map({4, 3, 3, 8}, rng);
  AttentionBlock<double> b("b", Mode::Tca, 8, 2);
  b.init(rng);
  const auto y = b.forward(x, nullptr);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] / x[i];
    EXPECT_GT(r, 1.0);
    EXPECT_LT(r, 2.0);
  }
}

TEST(Stca, AllOnesMaskEqualsTcaBitExactly) {
  Rng rng(9);
  const auto x = random_map({4, 3, 3, 16}, rng);
  AttentionBlock<double> tca("b", Mode::Tca, 16, 4), stca("b", Mode::Stca, 16, 4);
  tca.init(rng);
  stca.params() = tca.params();
  const auto ones = MaskGate::ones(3, 3);
  EXPECT_EQ(stca.forward(x, nullptr, &ones), tca.forward(x, nullptr));
}

TEST(Stca, ZeroMaskFallsBackToTcaWithWarning) {
  Rng rng(10);
  const auto x = random_map({4, 2, 2, 8}, rng);
  AttentionBlock<double> tca("b", Mode::Tca, 8, 2), stca("b", Mode::Stca, 8, 2);
  tca.init(rng);
  stca.params() = tca.params();
  std::vector<std::string> warnings;
  auto old = log::sink();
  log::set_sink([&](log::Level l, const std::string& m) {
    if (l == log::Level::Warn) warnings.push_back(m);
  });
  const auto zeros = MaskGate::zeros(2, 2);
  BlockCache<double> cache;
  const auto y = stca.forward(x, &cache, &zeros);
  log::set_sink(old);
  EXPECT_EQ(y, tca.forward(x, nullptr));
  EXPECT_TRUE(cache.fell_back);
  ASSERT_FALSE(warnings.empty());
  EXPECT_NE(warnings[0].find("falling back"), std::string::npos);
}

TEST(Stca, HalfMaskMatchesOracle) {
  Rng rng(11);
  const auto x = random_map({5, 4, 4, 16}, rng);
  AttentionBlock<double> stca("b", Mode::Stca, 16, 4);
  stca.init(rng);
  MaskGate m = MaskGate::zeros(4, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 2; ++j) m.bits[i * 4 + j] = 1;
  BlockCache<double> cache;
  const auto y = stca.forward(x, &cache, &m);
  const auto ref = testing_util::tca_oracle(x, stca.params(), 3, &m.bits);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(cache.tca.weights[i], ref[i], 1e-6);
  // Excitation is applied to the unmasked input.
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t p = 0; p < 16; ++p)
      for (std::size_t c = 0; c < 16; ++c) {
        const std::size_t i = (t * 16 + p) * 16 + c;
        EXPECT_NEAR(y[i], x[i] * (1 + ref[t * 16 + c]), 1e-12);
      }
}

TEST(Stca, RequiresMask) {
  Rng rng(12);
  AttentionBlock<double> stca("b", Mode::Stca, 8, 2);
  stca.init(rng);
  EXPECT_THROW(stca.forward(random_map({2, 2, 2, 8}, rng), nullptr), InvalidInput);
  const auto wrong = MaskGate::ones(3, 3);
  EXPECT_THROW(stca.forward(random_map({2, 2, 2, 8}, rng), nullptr, &wrong), InvalidInput);
}

TEST(DilateMask, Examples) {
  Tensor<double> single({5, 5});
  single.at(2, 2) = 1.0;
  const auto g = dilate_mask(single, 3);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      const bool inside = i >= 1 && i <= 3 && j >= 1 && j <= 3;
      EXPECT_EQ(g.bits[i * 5 + j], inside ? 1 : 0);
    }
  EXPECT_EQ(g.count(), 9u);
  EXPECT_FALSE(dilate_mask(Tensor<double>({4, 4}), 3).any());
  Tensor<double> uniform({4, 4});
  uniform.fill(0.6);
  EXPECT_EQ(dilate_mask(uniform, 3).count(), 16u);
  EXPECT_THROW(dilate_mask(uniform, 2), InvalidConfig);
}

TEST(DilateMask, CornerSeedIsClipped) {
  Tensor<double> p({4, 4});
  p.at(0, 0) = 0.9;
  EXPECT_EQ(dilate_mask(p, 3).count(), 4u);
}

TEST(GateFromProbability, AreaDownsampleThenDilate) {
  Tensor<double> prob({8, 8});
  // One full 2x2 block lit in the top-left quarter cell (0,0).
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) prob.at(i, j) = 1.0;
  const auto down = area_downsample(prob, 4, 4);
  EXPECT_DOUBLE_EQ(down.at(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(down.at(1, 1), 0.0);
  const auto g = gate_from_probability(prob, 4, 4, 3, 0.5);
  EXPECT_EQ(g.count(), 4u);
  EXPECT_EQ(g.bits[0], 1);
  EXPECT_EQ(g.bits[1 * 4 + 1], 1);
  EXPECT_EQ(g.bits[2 * 4 + 2], 0);
}

TEST(SeBlock, SaturatedGateIsIdentity) {
  Rng rng(13);
  AttentionBlock<double> se("se", Mode::Se, 8, 2);
  se.init(rng);
  se.params().expand.weight.value.fill(0.0);
  se.params().expand.bias.value.fill(50.0);
  const auto x = random_map({3, 2, 2, 8}, rng);
  EXPECT_LT(max_abs_diff(se.forward(x, nullptr), x), 1e-15);
}

TEST(MeBlock, ConstantInputGivesHalfWeights) {
  Rng rng(14);
  AttentionBlock<double> me("me", Mode::Me, 8, 2);
  me.init(rng);
  const auto x = temporally_constant(4, 2, 2, 8, rng);
  BlockCache<double> cache;
  const auto y = me.forward(x, &cache);
  for (double d : cache.diff.values()) EXPECT_NEAR(d, 0.0, 1e-15);
  for (double w : cache.weights.values()) EXPECT_DOUBLE_EQ(w, 0.5);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(y[i], 1.5 * x[i]);
}

TEST(AttentionBlock, EveryModePreservesShape) {
  Rng rng(15);
  const auto x = random_map({4, 3, 5, 16}, rng);
  const auto ones = MaskGate::ones(3, 5);
  for (Mode m : {Mode::None, Mode::Tca, Mode::Stca, Mode::Se, Mode::Me}) {
    AttentionBlock<double> b("b", m, 16, 4);
    b.init(rng);
    EXPECT_EQ(b.forward(x, nullptr, &ones).shape(), x.shape()) << mode_name(m);
  }
  AttentionBlock<double> none("n", Mode::None, 16, 4);
  EXPECT_EQ(none.forward(x, nullptr), x);
}

TEST(AttentionBlock, WrongChannelsRejected) {
  Rng rng(16);
  for (Mode m : {Mode::Tca, Mode::Se, Mode::Me}) {
    AttentionBlock<double> b("b", m, 16, 4);
    b.init(rng);
    EXPECT_THROW(b.forward(random_map({2, 2, 2, 8}, rng), nullptr), InvalidInput) << mode_name(m);
  }
}

TEST(ParseMode, Names) {
  EXPECT_EQ(parse_mode("tca"), Mode::Tca);
  EXPECT_EQ(parse_mode("stca-last"), Mode::Stca);
  EXPECT_THROW(parse_mode("xyz"), InvalidConfig);
}
