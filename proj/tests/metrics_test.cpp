#include <gtest/gtest.h>

#include <algorithm>

#include "echoef/harness.hpp"
#include "echoef/metrics.hpp"

using namespace echoef;
using namespace echoef::metrics;

namespace {

model::ModelConfig tiny_model(model::Ablation a = model::Ablation::M3) {
  model::ModelConfig c;
  c.ablation = a;
  c.backbone.stage_channels = {4, 8};
  c.backbone.temporal_strides = {1, 2};
  c.backbone.spatial_strides = {2, 2};
  c.backbone.attention = {attention::Mode::None, attention::Mode::None};
  c.backbone.reduction = 2;
  c.image_height = c.image_width = 16;
  c.clip_frames = 4;
  c.anchors = 5;
  c.aspp_channels = 2;
  c.mask_threshold = 0.05;
  return c;
}

synth::SyntheticVideo tiny_video(std::uint64_t seed, double ef = 50) {
  synth::GeneratorProfile prof{16, 16, 24, 8, 12, 20, 70};
  Rng rng(seed);
  return synth::generate_video(synth::sample_params(prof, ef, rng), rng());
}

}  // namespace

TEST(Metrics, WorkedExample) {
  const auto r = compute_metrics({50, 60}, {52, 57});
  EXPECT_DOUBLE_EQ(r.mae, 2.5);
  EXPECT_DOUBLE_EQ(r.rmse, std::sqrt(6.5));
  ASSERT_TRUE(r.r2);
  EXPECT_NEAR(*r.r2, 0.74, 1e-12);
  EXPECT_EQ(r.residuals, (std::vector<double>{2, -3}));
}

TEST(Metrics, PerfectPrediction) {
  const std::vector<double> y{12, 40, 77, 33};
  const auto r = compute_metrics(y, y);
  EXPECT_EQ(r.mae, 0.0);
  EXPECT_EQ(r.rmse, 0.0);
  EXPECT_EQ(*r.r2, 1.0);
}

TEST(Metrics, MeanPredictorHasZeroR2) {
  const std::vector<double> y{12, 40, 77, 33};
  const std::vector<double> mean(4, 40.5);
  EXPECT_NEAR(*compute_metrics(y, mean).r2, 0.0, 1e-12);
}

TEST(Metrics, RandomInvariants) {
  Rng rng(3);
  std::uniform_real_distribution<double> d(0, 100);
  for (int k = 0; k < 100; ++k) {
    std::vector<double> y(7), p(7);
    for (auto& v : y) v = d(rng);
    for (auto& v : p) v = d(rng);
    const auto r = compute_metrics(y, p);
    EXPECT_GE(r.rmse, r.mae - 1e-12);
    EXPECT_LE(*r.r2, 1.0);
    std::vector<std::size_t> perm(7);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> yp, pp;
    for (auto i : perm) {
      yp.push_back(y[i]);
      pp.push_back(p[i]);
    }
    const auto q = compute_metrics(yp, pp);
    EXPECT_NEAR(q.mae, r.mae, 1e-12);
    EXPECT_NEAR(q.rmse, r.rmse, 1e-12);
    EXPECT_NEAR(*q.r2, *r.r2, 1e-12);
  }
}

TEST(Metrics, UndefinedAndInvalid) {
  EXPECT_FALSE(compute_metrics({50}, {52}).r2.has_value());
  EXPECT_FALSE(compute_metrics({50, 50}, {52, 49}).r2.has_value());
  EXPECT_TRUE(std::isnan(compute_metrics({50}, {52}).r2_or_nan()));
  EXPECT_THROW(compute_metrics({50, 60}, {52}), InvalidInput);
  EXPECT_THROW(compute_metrics({}, {}), InvalidInput);
}

TEST(ClipSamplingTest, DeterministicAndInRange) {
  const ClipSampling s{8, 2};
  const auto a = sample_clip_indices(40, s, 5, 9);
  EXPECT_EQ(a, sample_clip_indices(40, s, 5, 9));
  for (const auto& idx : a) {
    ASSERT_EQ(idx.size(), 8u);
    for (std::size_t i = 1; i < idx.size(); ++i) EXPECT_EQ(idx[i], idx[i - 1] + 2);
    EXPECT_LT(idx.back(), 40u);
  }
  const auto shortv = sample_clip_indices(10, s, 2, 1);
  EXPECT_EQ(shortv[0].back(), 9u);
}

TEST(PredictVideo, SingleClipMatchesDirectDecode) {
  const auto mc = tiny_model();
  const auto m = harness::build_model<double>(mc, 4);
  const auto v = tiny_video(1);
  const auto idx = sample_clip_indices(v.frames.frames, {mc.clip_frames, 2}, 1, 21);
  const double direct = m.forward(clip_tensor<double>(v.frames, idx[0])).estimate.ef_hat;
  EXPECT_DOUBLE_EQ(predict_video(m, v, 1, 21), direct);
  EXPECT_DOUBLE_EQ(predict_video(m, v, 10, 21), predict_video(m, v, 10, 21));
  EXPECT_THROW(predict_video(m, v, 0, 21), InvalidInput);
}

TEST(PredictVideo, AveragingReducesSpread) {
  auto mc = tiny_model(model::Ablation::M0);
  const auto m = harness::build_model<double>(mc, 5);
  const auto v = tiny_video(2);
  auto variance = [&](std::size_t n) {
    std::vector<double> preds;
    for (std::uint64_t s = 0; s < 30; ++s) preds.push_back(predict_video(m, v, n, 100 + s));
    const double mean = std::accumulate(preds.begin(), preds.end(), 0.0) / preds.size();
    double var = 0;
    for (double p : preds) var += (p - mean) * (p - mean);
    return var / preds.size();
  };
  EXPECT_LE(variance(10), variance(1));
}

TEST(Cam, ConstantMapNormalizesToZero) {
  Tensor<double> x({3, 3});
  x.fill(4.2);
  const auto n = minmax_normalize(x);
  for (double v : n.values()) EXPECT_EQ(v, 0.0);
}

TEST(Cam, ShapeRangeAndOracle) {
  const auto mc = tiny_model();
  const auto m = harness::build_model<double>(mc, 6);
  const auto v = tiny_video(3);
  const auto idx = sample_clip_indices(v.frames.frames, {mc.clip_frames, 2}, 1, 4)[0];
  const auto clip = clip_tensor<double>(v.frames, idx);
  const auto c = cam(m, clip, std::size_t{2});
  EXPECT_EQ(c.map.shape(), (Shape{16, 16}));
  EXPECT_EQ(c.interval, 2u);
  for (double x : c.map.values()) {
    EXPECT_GE(x, 0.0);
    EXPECT_LE(x, 1.0);
  }
  const auto out = m.forward(clip);
  const auto& a = out.final_features;
  const auto& w = m.anchor_head().cls.weight.value;
  for (std::size_t i = 0; i < a.dim(1); ++i)
    for (std::size_t j = 0; j < a.dim(2); ++j) {
      double s = 0;
      for (std::size_t t = 0; t < a.dim(0); ++t)
        for (std::size_t k = 0; k < a.dim(3); ++k) s += w.at(k, 2) * a.at(t, i, j, k) / double(a.dim(0));
      EXPECT_NEAR(c.raw.at(i, j), std::max(0.0, s), 1e-12);
    }
  EXPECT_THROW(cam(m, clip, std::size_t{5}), InvalidInput);
}

TEST(Cam, DirectHeadIsUnsupported) {
  const auto mc = tiny_model(model::Ablation::M0);
  const auto m = harness::build_model<double>(mc, 7);
  const auto v = tiny_video(4);
  const auto idx = sample_clip_indices(v.frames.frames, {mc.clip_frames, 2}, 1, 4)[0];
  EXPECT_THROW(cam(m, clip_tensor<double>(v.frames, idx)), UnsupportedOperation);
}

TEST(Cam, MassInsideAndOutside) {
  CamMap c;
  c.raw = Tensor<double>({2, 2}, std::vector<double>{1, 1, 0, 0});
  std::vector<std::uint8_t> mask(16, 0);
  for (int i = 0; i < 4; ++i) mask[i] = 1;  // top row
  const auto m = cam_mass(c, mask, 4, 4);
  EXPECT_GT(m.inside_mean, m.outside_mean);
  EXPECT_DOUBLE_EQ(m.inside_mean, 1.0);
}
