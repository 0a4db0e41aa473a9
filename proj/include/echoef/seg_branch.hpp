#pragma once

#include <string>
#include <vector>

#include "echoef/attention.hpp"
#include "echoef/nn/conv.hpp"

namespace echoef::seg {

using attention::FeatureMap;

struct SegConfig {
  std::size_t in_channels = 64;
  std::size_t image_height = 64;
  std::size_t image_width = 64;
  std::size_t aspp_channels = 16;
  std::vector<std::size_t> aspp_rates{1, 2, 4};
  /// The decoder works at image / decode_factor before the final upsample.
  std::size_t decode_factor = 4;

  std::size_t decode_height() const { return image_height / decode_factor; }
  std::size_t decode_width() const { return image_width / decode_factor; }

  void validate() const {
    if (in_channels == 0 || aspp_channels == 0 || aspp_rates.empty()) throw InvalidConfig("segmentation branch sizes must be positive");
    if (decode_factor == 0 || decode_height() == 0 || decode_width() == 0) throw InvalidConfig("decode_factor too large for image");
  }
};

/// Softmax-normalized temporal relevance, length T_f.
template <typename T>
using RelevanceWeights = Tensor<T>;

/// Foreground logit and probability over the full image (H x W).
template <typename T>
struct MaskPrediction {
  Tensor<T> logits;
  Tensor<T> prob;

  static MaskPrediction from_logits(Tensor<T> logits) {
    MaskPrediction m{std::move(logits), {}};
    m.prob = sigmoid(m.logits);
    return m;
  }
};

/// R = softmax_t(W3 * spatial_mean(Z)).
template <typename T>
RelevanceWeights<T> temporal_relevance(const FeatureMap<T>& z, const Dense<T>& w3, Tensor<T>* zbar_out = nullptr) {
  const Tensor<T> zbar = spatial_mean(z);
  const Tensor<T> logits = w3.forward(zbar);
  const std::vector<T> r = softmax<T>(logits.values());
  if (zbar_out) *zbar_out = zbar;
  return Tensor<T>({z.dim(0)}, r);
}

/// F = sum_t Z_t * R_t, returned as 1 x H x W x C.
template <typename T>
FeatureMap<T> aggregate(const FeatureMap<T>& z, const RelevanceWeights<T>& r) {
  if (z.rank() != 4 || r.size() != z.dim(0)) {
    throw InvalidInput("aggregate: relevance length " + std::to_string(r.size()) + " vs features " + shape_str(z.shape()));
  }
  const std::size_t plane = z.size() / z.dim(0);
  FeatureMap<T> f({1, z.dim(1), z.dim(2), z.dim(3)});
  for (std::size_t t = 0; t < z.dim(0); ++t) {
    const T* src = z.data() + t * plane;
    for (std::size_t i = 0; i < plane; ++i) f[i] += src[i] * r[t];
  }
  return f;
}

template <typename T>
struct PathCache {
  Tensor<T> zbar;
  RelevanceWeights<T> relevance;
  FeatureMap<T> frame_rep, upsampled;
  std::vector<typename Conv3d<T>::Cache> aspp;
  std::vector<FeatureMap<T>> aspp_out;
  typename Conv3d<T>::Cache fuse, dec1, dec2;
  FeatureMap<T> fused, dec1_out, low_logits;
};

/// One ED or ES path: relevance pooling, upsample, ASPP-lite, two-conv decoder.
template <typename T>
class SegPath {
 public:
  SegPath() = default;
  SegPath(const std::string& name, const SegConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    relevance = Dense<T>(name + ".relevance", cfg.in_channels, 1);
    for (std::size_t i = 0; i < cfg.aspp_rates.size(); ++i) {
      const std::size_t r = cfg.aspp_rates[i];
      aspp.emplace_back(name + ".aspp" + std::to_string(i),
                        ConvSpec{cfg.in_channels, cfg.aspp_channels, {1, 3, 3}, {1, 1, 1}, {1, r, r}});
    }
    const std::size_t a = cfg.aspp_channels;
    fuse = Conv3d<T>(name + ".fuse", ConvSpec{a * cfg.aspp_rates.size(), a, {1, 1, 1}, {1, 1, 1}, {1, 1, 1}});
    dec1 = Conv3d<T>(name + ".dec1", ConvSpec{a, a, {1, 3, 3}, {1, 1, 1}, {1, 1, 1}});
    dec2 = Conv3d<T>(name + ".dec2", ConvSpec{a, 1, {1, 3, 3}, {1, 1, 1}, {1, 1, 1}});
  }

  const SegConfig& config() const { return cfg_; }

  void init(Rng& rng) {
    relevance.init(rng, InitKind::Linear);
    for (auto& c : aspp) c.init(rng, InitKind::Relu);
    fuse.init(rng, InitKind::Relu);
    dec1.init(rng, InitKind::Relu);
    dec2.init(rng, InitKind::Linear);
  }

  void collect(ParamRefs<T>& out) {
    relevance.collect(out);
    for (auto& c : aspp) c.collect(out);
    fuse.collect(out);
    dec1.collect(out);
    dec2.collect(out);
  }

  /// Decoder applied to a 1 x h x w x C frame representation.
  MaskPrediction<T> decode_mask(const FeatureMap<T>& f, PathCache<T>* cache = nullptr) const {
    if (f.rank() != 4 || f.dim(0) != 1 || f.dim(3) != cfg_.in_channels) {
      throw InvalidInput("decode_mask expects 1 x H x W x " + std::to_string(cfg_.in_channels));
    }
    FeatureMap<T> up = resize_bilinear(f, cfg_.decode_height(), cfg_.decode_width());
    std::vector<FeatureMap<T>> branches;
    if (cache) cache->aspp.assign(aspp.size(), {});
    for (std::size_t i = 0; i < aspp.size(); ++i) branches.push_back(relu(aspp[i].forward(up, cache ? &cache->aspp[i] : nullptr)));
    std::vector<const FeatureMap<T>*> parts;
    for (const auto& b : branches) parts.push_back(&b);
    FeatureMap<T> fused = relu(fuse.forward(concat_channels(parts), cache ? &cache->fuse : nullptr));
    FeatureMap<T> d1 = relu(dec1.forward(fused, cache ? &cache->dec1 : nullptr));
    FeatureMap<T> low = dec2.forward(d1, cache ? &cache->dec2 : nullptr);
    FeatureMap<T> full = resize_bilinear(low, cfg_.image_height, cfg_.image_width);
    if (cache) {
      cache->frame_rep = f;
      cache->upsampled = std::move(up);
      cache->aspp_out = std::move(branches);
      cache->fused = std::move(fused);
      cache->dec1_out = std::move(d1);
      cache->low_logits = std::move(low);
    }
    return MaskPrediction<T>::from_logits(full.reshaped({cfg_.image_height, cfg_.image_width}));
  }

  MaskPrediction<T> forward(const FeatureMap<T>& z, PathCache<T>* cache = nullptr) const {
    Tensor<T> zbar;
    RelevanceWeights<T> r = temporal_relevance(z, relevance, &zbar);
    FeatureMap<T> f = aggregate(z, r);
    MaskPrediction<T> m = decode_mask(f, cache);
    if (cache) {
      cache->zbar = std::move(zbar);
      cache->relevance = std::move(r);
    }
    return m;
  }

  /// Backward from dL/dlogits (H x W); returns dL/dF (1 x h x w x C).
  FeatureMap<T> decode_backward(PathCache<T>& cache, const Tensor<T>& g_logits) {
    const Tensor<T> g_full = g_logits.reshaped({1, cfg_.image_height, cfg_.image_width, 1});
    FeatureMap<T> g = resize_bilinear_backward(g_full, cache.low_logits.shape());
    g = dec2.backward(cache.dec2, g);
    relu_backward_inplace(cache.dec1_out, g);
    g = dec1.backward(cache.dec1, g);
    relu_backward_inplace(cache.fused, g);
    g = fuse.backward(cache.fuse, g);
    std::vector<std::size_t> widths(aspp.size(), cfg_.aspp_channels);
    std::vector<FeatureMap<T>> gb = split_channels(g, widths);
    FeatureMap<T> g_up(cache.upsampled.shape());
    for (std::size_t i = 0; i < aspp.size(); ++i) {
      relu_backward_inplace(cache.aspp_out[i], gb[i]);
      g_up += aspp[i].backward(cache.aspp[i], gb[i]);
    }
    return resize_bilinear_backward(g_up, cache.frame_rep.shape());
  }

  /// Full path backward; adds dL/dZ into gz.
  void backward(PathCache<T>& cache, const FeatureMap<T>& z, const Tensor<T>& g_logits, FeatureMap<T>& gz) {
    const FeatureMap<T> gf = decode_backward(cache, g_logits);
    const std::size_t frames = z.dim(0), plane = z.size() / frames;
    std::vector<T> gr(frames, T{0});
    for (std::size_t t = 0; t < frames; ++t) {
      const T* zt = z.data() + t * plane;
      T* gzt = gz.data() + t * plane;
      const T rt = cache.relevance[t];
      for (std::size_t i = 0; i < plane; ++i) {
        gzt[i] += gf[i] * rt;
        gr[t] += gf[i] * zt[i];
      }
    }
    const std::vector<T> g_rel_logits = softmax_backward<T>(cache.relevance.values(), gr);
    const Tensor<T> g_zbar = relevance.backward(cache.zbar, Tensor<T>({frames, 1}, g_rel_logits));
    spatial_mean_backward(g_zbar, gz);
  }

  Dense<T> relevance;
  std::vector<Conv3d<T>> aspp;
  Conv3d<T> fuse, dec1, dec2;

 private:
  SegConfig cfg_;
};

template <typename T>
struct SegCache {
  PathCache<T> ed, es;
};

/// Two independent paths predicting the end-diastolic and end-systolic masks.
template <typename T>
class SegBranch {
 public:
  SegBranch() = default;
  explicit SegBranch(const SegConfig& cfg) : ed("seg.ed", cfg), es("seg.es", cfg) {}

  void init(Rng& rng) {
    ed.init(rng);
    es.init(rng);
  }
  void collect(ParamRefs<T>& out) {
    ed.collect(out);
    es.collect(out);
  }

  std::pair<MaskPrediction<T>, MaskPrediction<T>> segment(const FeatureMap<T>& z, SegCache<T>* cache = nullptr) const {
    return {ed.forward(z, cache ? &cache->ed : nullptr), es.forward(z, cache ? &cache->es : nullptr)};
  }

  /// Returns dL/dZ.
  FeatureMap<T> backward(SegCache<T>& cache, const FeatureMap<T>& z, const Tensor<T>& g_ed, const Tensor<T>& g_es) {
    FeatureMap<T> gz(z.shape());
    ed.backward(cache.ed, z, g_ed, gz);
    es.backward(cache.es, z, g_es, gz);
    return gz;
  }

  SegPath<T> ed, es;
};

}  // namespace echoef::seg
