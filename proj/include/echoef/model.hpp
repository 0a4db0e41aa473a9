#pragma once

#include <optional>
#include <string>
#include <vector>

#include "echoef/attention.hpp"
#include "echoef/backbone.hpp"
#include "echoef/ef_head.hpp"
#include "echoef/seg_branch.hpp"

namespace echoef::model {

using attention::FeatureMap;
using attention::Mode;

/// Ablation ladder: M0 direct regression, M1 anchor head, M2 + attention
/// after every stage, M3 + segmentation branch with S-TCA in the last stage.
enum class Ablation { M0, M1, M2, M3 };

inline const char* ablation_name(Ablation a) {
  switch (a) {
    case Ablation::M0: return "M0";
    case Ablation::M1: return "M1";
    case Ablation::M2: return "M2";
    case Ablation::M3: return "M3";
  }
  return "?";
}

inline Ablation parse_ablation(const std::string& s) {
  if (s == "M0") return Ablation::M0;
  if (s == "M1") return Ablation::M1;
  if (s == "M2") return Ablation::M2;
  if (s == "M3") return Ablation::M3;
  throw InvalidConfig("unknown ablation '" + s + "'");
}

struct ModelConfig {
  Ablation ablation = Ablation::M3;
  Mode attention = Mode::Tca;  // block used by M2/M3 stages (tca | se | me)
  backbone::BackboneConfig backbone = backbone::BackboneConfig::test_profile();
  std::size_t image_height = 64, image_width = 64, clip_frames = 32;
  std::size_t anchors = 20;
  head::DecodeMode decode = head::DecodeMode::Argmax;
  std::size_t aspp_channels = 16;
  int dilation_kernel = 3;
  double mask_threshold = 0.5;

  bool anchor_head() const { return ablation != Ablation::M0; }
  bool segmentation() const { return ablation == Ablation::M3; }

  /// Per-stage attention implied by the ablation.
  backbone::BackboneConfig resolved_backbone() const {
    backbone::BackboneConfig b = backbone;
    const std::size_t n = b.stages();
    b.attention.assign(n, Mode::None);
    if (ablation == Ablation::M2 || ablation == Ablation::M3) b.attention.assign(n, attention);
    if (ablation == Ablation::M3) b.attention.back() = Mode::Stca;
    return b;
  }

  void validate() const {
    if (attention != Mode::Tca && attention != Mode::Se && attention != Mode::Me) {
      throw InvalidConfig("attention baseline must be one of tca, se, me");
    }
    if (ablation == Ablation::M3 && attention != Mode::Tca) throw InvalidConfig("M3 requires attention = tca");
    if (anchors < 2) throw InvalidConfig("anchors must be >= 2");
    if (dilation_kernel < 1 || dilation_kernel % 2 == 0) throw InvalidConfig("dilation_kernel must be odd");
    resolved_backbone().validate();
    if (clip_frames % backbone.temporal_reduction() != 0) throw InvalidConfig("clip_frames not divisible by temporal strides");
  }
};

template <typename T>
struct Output {
  head::EfEstimate estimate;
  std::optional<head::AnchorPrediction<T>> anchor;
  T direct = 0;
  std::optional<seg::MaskPrediction<T>> ed, es;
  std::optional<attention::MaskGate> gate;
  FeatureMap<T> final_features;  // globally pooled into the head
  Tensor<T> pooled;
};

template <typename T>
struct Cache {
  backbone::EncoderCache<T> encoder;
  FeatureMap<T> z;
  seg::SegCache<T> seg;
  attention::BlockCache<T> stca;
  Tensor<T> pooled;
};

/// dL/d(head outputs) and dL/d(mask logits) for one clip.
template <typename T>
struct OutputGrad {
  std::vector<T> logits, offsets;
  T direct = 0;
  std::optional<Tensor<T>> ed, es;
};

template <typename T>
class EfModel {
 public:
  EfModel() = default;
  explicit EfModel(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    encoder_ = backbone::Encoder<T>(cfg_.resolved_backbone());
    const Shape zs = encoder_.output_shape({cfg_.clip_frames, cfg_.image_height, cfg_.image_width, 1});
    const std::size_t c = zs[3];
    if (cfg_.anchor_head()) {
      anchor_ = head::AnchorHead<T>(c, cfg_.anchors);
    } else {
      direct_ = head::DirectHead<T>(c);
    }
    if (cfg_.segmentation()) {
      seg::SegConfig sc;
      sc.in_channels = c;
      sc.image_height = cfg_.image_height;
      sc.image_width = cfg_.image_width;
      sc.aspp_channels = cfg_.aspp_channels;
      seg_ = seg::SegBranch<T>(sc);
    }
  }

  const ModelConfig& config() const { return cfg_; }
  backbone::Encoder<T>& encoder() { return encoder_; }
  const backbone::Encoder<T>& encoder() const { return encoder_; }
  seg::SegBranch<T>& seg_branch() { return seg_; }
  head::AnchorHead<T>& anchor_head() { return anchor_; }
  const head::AnchorHead<T>& anchor_head() const { return anchor_; }
  head::DirectHead<T>& direct_head() { return direct_; }

  void init(Rng& rng) {
    encoder_.init(rng);
    if (cfg_.segmentation()) seg_.init(rng);
    if (cfg_.anchor_head()) anchor_.init(rng);
    else direct_.init(rng);
  }

  ParamRefs<T> params() {
    ParamRefs<T> out;
    encoder_.collect(out);
    if (cfg_.segmentation()) seg_.collect(out);
    if (cfg_.anchor_head()) anchor_.collect(out);
    else direct_.collect(out);
    return out;
  }

  std::size_t param_count() { return count_scalars(params()); }

  Output<T> forward(const FeatureMap<T>& clip, Cache<T>* cache = nullptr) const {
    Output<T> out;
    backbone::EncoderOutput<T> enc = encoder_.encode(clip, cache ? &cache->encoder : nullptr);
    FeatureMap<T> features = std::move(enc.z);
    if (cfg_.segmentation()) {
      auto [ed, es] = seg_.segment(features, cache ? &cache->seg : nullptr);
      Tensor<double> prob = ed.prob.template cast<double>();
      out.gate = attention::gate_from_probability(prob, features.dim(1), features.dim(2), cfg_.dilation_kernel,
                                                  cfg_.mask_threshold);
      out.ed = std::move(ed);
      out.es = std::move(es);
      const auto& stca = encoder_.stages().back().attention;
      out.final_features = stca.forward(features, cache ? &cache->stca : nullptr, &*out.gate);
      if (cache) cache->z = std::move(features);
    } else {
      out.final_features = std::move(features);
    }
    out.pooled = global_mean(out.final_features);
    if (cfg_.anchor_head()) {
      out.anchor = anchor_.forward(out.pooled);
      out.estimate = head::decode(*out.anchor, cfg_.decode);
    } else {
      out.direct = direct_.forward(out.pooled);
      out.estimate = head::direct_estimate(static_cast<double>(out.direct));
    }
    if (cache) cache->pooled = out.pooled;
    return out;
  }

  /// Accumulates gradients of every parameter. The S-TCA gate is treated
  /// as a constant, so the segmentation branch only sees the mask-logit gradients.
  void backward(Cache<T>& cache, const Shape& final_shape, const OutputGrad<T>& g) {
    Tensor<T> g_pooled = cfg_.anchor_head() ? anchor_.backward(cache.pooled, g.logits, g.offsets)
                                            : direct_.backward(cache.pooled, g.direct);
    FeatureMap<T> g_feat = global_mean_backward(g_pooled, final_shape);
    if (cfg_.segmentation()) {
      FeatureMap<T> g_z = encoder_.stages().back().attention.backward(cache.stca, g_feat);
      const Tensor<T> zero_mask({cfg_.image_height, cfg_.image_width});
      g_z += seg_.backward(cache.seg, cache.z, g.ed ? *g.ed : zero_mask, g.es ? *g.es : zero_mask);
      g_feat = std::move(g_z);
    }
    encoder_.backward(cache.encoder, std::move(g_feat));
  }

 private:
  ModelConfig cfg_;
  backbone::Encoder<T> encoder_;
  head::AnchorHead<T> anchor_;
  head::DirectHead<T> direct_;
  seg::SegBranch<T> seg_;
};

}  // namespace echoef::model
