#pragma once

#include <numeric>
#include <string>
#include <vector>

#include "echoef/attention.hpp"
#include "echoef/nn/conv.hpp"

namespace echoef::backbone {

using attention::FeatureMap;
using attention::Mode;

struct BackboneConfig {
  std::vector<std::size_t> stage_channels{16, 32, 64, 128};
  std::vector<std::size_t> temporal_strides{1, 2, 2, 2};
  std::vector<std::size_t> spatial_strides{2, 2, 2, 2};
  std::vector<Mode> attention{Mode::None, Mode::None, Mode::None, Mode::None};
  std::size_t reduction = 16;
  int pool_window = 3;

  static BackboneConfig default_profile() { return {}; }
  static BackboneConfig test_profile() {
    BackboneConfig c;
    c.stage_channels = {8, 16, 32, 64};
    return c;
  }

  std::size_t stages() const { return stage_channels.size(); }

  std::size_t temporal_reduction() const {
    return std::accumulate(temporal_strides.begin(), temporal_strides.end(), std::size_t{1}, std::multiplies<>());
  }
  std::size_t spatial_reduction() const {
    return std::accumulate(spatial_strides.begin(), spatial_strides.end(), std::size_t{1}, std::multiplies<>());
  }

  /// Reduction ratio actually used in a stage: r, capped at the channel count.
  std::size_t stage_reduction(std::size_t stage) const { return std::min(reduction, stage_channels[stage]); }

  void validate() const {
    if (stage_channels.empty()) throw InvalidConfig("backbone needs at least one stage");
    if (temporal_strides.size() != stages() || spatial_strides.size() != stages() || attention.size() != stages()) {
      throw InvalidConfig("backbone stage lists (channels, strides, attention) differ in length");
    }
    for (std::size_t s = 0; s < stages(); ++s) {
      if (stage_channels[s] == 0 || temporal_strides[s] == 0 || spatial_strides[s] == 0) {
        throw InvalidConfig("backbone channels and strides must be positive");
      }
      if (attention[s] == Mode::Stca && s + 1 != stages()) {
        throw InvalidConfig("S-TCA is only allowed in the last backbone stage");
      }
      if (attention[s] != Mode::None && stage_channels[s] % stage_reduction(s) != 0) {
        throw InvalidConfig("stage " + std::to_string(s) + " channels not divisible by reduction");
      }
    }
    if (pool_window < 1 || pool_window % 2 == 0) throw InvalidConfig("pool_window must be odd");
  }
};

/// Learnable-scalar count of an encoder built from `config`.
inline std::size_t count_params(const BackboneConfig& config) {
  config.validate();
  std::size_t n = 0, cin = 1;
  for (std::size_t s = 0; s < config.stages(); ++s) {
    const std::size_t c = config.stage_channels[s];
    n += 9 * cin * c + c;   // 1x3x3 spatial
    n += 3 * c * c + c;     // 3x1x1 temporal
    if (config.attention[s] != Mode::None) {
      const std::size_t h = c / config.stage_reduction(s);
      n += c * h + h + h * c + c;
    }
    cin = c;
  }
  return n;
}

/// Shared spatiotemporal representation Z and per-stage diagnostics.
template <typename T>
struct EncoderOutput {
  FeatureMap<T> z;
  std::vector<Shape> stage_shapes;
};

/// Zero-mean, unit-variance float clip of shape T x H x W x 1.
template <typename T, typename Pixel>
FeatureMap<T> prepare_clip(std::span<const Pixel> frames, std::size_t t, std::size_t h, std::size_t w) {
  if (frames.size() != t * h * w) throw InvalidInput("clip pixel count does not match its shape");
  double sum = 0, sq = 0;
  for (auto v : frames) {
    sum += static_cast<double>(v);
    sq += static_cast<double>(v) * static_cast<double>(v);
  }
  const double n = static_cast<double>(frames.size());
  const double mean = sum / n;
  const double var = std::max(0.0, sq / n - mean * mean);
  const double inv = var > 1e-12 ? 1.0 / std::sqrt(var) : 1.0;
  FeatureMap<T> out({t, h, w, 1});
  for (std::size_t i = 0; i < frames.size(); ++i) out[i] = static_cast<T>((static_cast<double>(frames[i]) - mean) * inv);
  return out;
}

template <typename T>
struct StageCache {
  typename Conv3d<T>::Cache spatial, temporal;
  FeatureMap<T> spatial_out, temporal_out;
  attention::BlockCache<T> attn;
};

template <typename T>
struct EncoderCache {
  std::vector<StageCache<T>> stages;
};

/// One factorized block per stage: 1x3x3 conv, ReLU, 3x1x1 conv, ReLU,
/// with the stage strides folded into the two convolutions, then attention.
template <typename T>
class Stage {
 public:
  Stage() = default;
  Stage(const std::string& name, std::size_t cin, std::size_t cout, std::size_t t_stride, std::size_t s_stride,
        Mode mode, std::size_t reduction, int window)
      : spatial(name + ".spatial", ConvSpec{cin, cout, {1, 3, 3}, {1, s_stride, s_stride}, {1, 1, 1}}),
        temporal(name + ".temporal", ConvSpec{cout, cout, {3, 1, 1}, {t_stride, 1, 1}, {1, 1, 1}}),
        attention(name + ".attn", mode, cout, reduction, window) {}

  void init(Rng& rng) {
    spatial.init(rng, InitKind::Relu);
    temporal.init(rng, InitKind::Relu);
    attention.init(rng);
  }
  void collect(ParamRefs<T>& out) {
    spatial.collect(out);
    temporal.collect(out);
    attention.collect(out);
  }

  /// Convolutional part only (pre-attention features).
  FeatureMap<T> convolve(const FeatureMap<T>& x, StageCache<T>* cache) const {
    FeatureMap<T> a = relu(spatial.forward(x, cache ? &cache->spatial : nullptr));
    FeatureMap<T> b = relu(temporal.forward(a, cache ? &cache->temporal : nullptr));
    if (cache) {
      cache->spatial_out = std::move(a);
      cache->temporal_out = b;
    }
    return b;
  }

  FeatureMap<T> convolve_backward(StageCache<T>& cache, FeatureMap<T> g, bool want_input_grad) {
    relu_backward_inplace(cache.temporal_out, g);
    FeatureMap<T> ga = temporal.backward(cache.temporal, g);
    relu_backward_inplace(cache.spatial_out, ga);
    return spatial.backward(cache.spatial, ga, want_input_grad);
  }

  Conv3d<T> spatial;
  Conv3d<T> temporal;
  attention::AttentionBlock<T> attention;
};

template <typename T>
class Encoder {
 public:
  Encoder() = default;
  explicit Encoder(const BackboneConfig& config) : config_(config) {
    config_.validate();
    std::size_t cin = 1;
    for (std::size_t s = 0; s < config_.stages(); ++s) {
      stages_.emplace_back("encoder.stage" + std::to_string(s), cin, config_.stage_channels[s],
                           config_.temporal_strides[s], config_.spatial_strides[s], config_.attention[s],
                           config_.stage_reduction(s), config_.pool_window);
      cin = config_.stage_channels[s];
    }
  }

  const BackboneConfig& config() const { return config_; }
  std::vector<Stage<T>>& stages() { return stages_; }
  const std::vector<Stage<T>>& stages() const { return stages_; }

  /// True when the last stage's attention is S-TCA and is applied by the caller.
  bool defers_last_attention() const { return config_.attention.back() == Mode::Stca; }

  void init(Rng& rng) {
    for (auto& s : stages_) s.init(rng);
  }
  void collect(ParamRefs<T>& out) {
    for (auto& s : stages_) s.collect(out);
  }

  Shape output_shape(const Shape& clip) const {
    Shape s = clip;
    for (const auto& st : stages_) s = st.temporal.output_shape(st.spatial.output_shape(s));
    return s;
  }

  /// Forward through all stages. For an S-TCA last stage, z holds that
  /// stage's pre-attention features.
  EncoderOutput<T> encode(const FeatureMap<T>& clip, EncoderCache<T>* cache = nullptr) const {
    if (clip.rank() != 4 || clip.dim(3) != 1) throw InvalidInput("encoder expects a T x H x W x 1 clip");
    if (clip.dim(0) % config_.temporal_reduction() != 0) {
      throw InvalidInput("clip length " + std::to_string(clip.dim(0)) + " not divisible by temporal reduction " +
                         std::to_string(config_.temporal_reduction()));
    }
    if (cache) cache->stages.assign(stages_.size(), {});
    EncoderOutput<T> out;
    FeatureMap<T> x = clip;
    for (std::size_t s = 0; s < stages_.size(); ++s) {
      StageCache<T>* sc = cache ? &cache->stages[s] : nullptr;
      x = stages_[s].convolve(x, sc);
      const Mode mode = stages_[s].attention.mode();
      if (mode != Mode::None && mode != Mode::Stca) x = stages_[s].attention.forward(x, sc ? &sc->attn : nullptr);
      out.stage_shapes.push_back(x.shape());
    }
    out.z = std::move(x);
    return out;
  }

  void backward(EncoderCache<T>& cache, FeatureMap<T> gz) {
    for (std::size_t s = stages_.size(); s-- > 0;) {
      StageCache<T>& sc = cache.stages[s];
      const Mode mode = stages_[s].attention.mode();
      if (mode != Mode::None && mode != Mode::Stca) gz = stages_[s].attention.backward(sc.attn, gz);
      gz = stages_[s].convolve_backward(sc, std::move(gz), s > 0);
    }
  }

 private:
  BackboneConfig config_;
  std::vector<Stage<T>> stages_;
};

}  // namespace echoef::backbone
