#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "echoef/log.hpp"
#include "echoef/nn/dense.hpp"
#include "echoef/nn/ops.hpp"

namespace echoef::attention {

/// T x H x W x C activation map.
template <typename T>
using FeatureMap = Tensor<T>;
/// T x C summary of a FeatureMap (spatially pooled).
template <typename T>
using ChannelDescriptor = Tensor<T>;
/// T x C excitation gate, entries in (0,1).
template <typename T>
using AttentionWeights = Tensor<T>;

/// Binary spatial gate at feature resolution.
struct MaskGate {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> bits;

  static MaskGate ones(std::size_t h, std::size_t w) { return {h, w, std::vector<std::uint8_t>(h * w, 1)}; }
  static MaskGate zeros(std::size_t h, std::size_t w) { return {h, w, std::vector<std::uint8_t>(h * w, 0)}; }

  bool any() const {
    for (auto b : bits)
      if (b) return true;
    return false;
  }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto b : bits) n += b ? 1 : 0;
    return n;
  }
};

enum class Mode { None, Tca, Se, Me, Stca };

inline const char* mode_name(Mode m) {
  switch (m) {
    case Mode::None: return "none";
    case Mode::Tca: return "tca";
    case Mode::Se: return "se";
    case Mode::Me: return "me";
    case Mode::Stca: return "stca";
  }
  return "?";
}

inline Mode parse_mode(const std::string& s) {
  if (s == "none") return Mode::None;
  if (s == "tca") return Mode::Tca;
  if (s == "se") return Mode::Se;
  if (s == "me") return Mode::Me;
  if (s == "stca" || s == "stca-last") return Mode::Stca;
  throw InvalidConfig("unknown attention mode '" + s + "'");
}

template <typename T>
struct PooledPair {
  FeatureMap<T> max;
  FeatureMap<T> mean;
  std::vector<std::uint32_t> argmax;  // source frame of each max element
};

/// Local max- and mean-pooling over a centred temporal window with
/// replicate padding at the clip ends.
template <typename T>
PooledPair<T> temporal_pool(const FeatureMap<T>& x, int window) {
  if (window < 1 || window % 2 == 0) throw InvalidConfig("temporal pooling window must be odd and >= 1");
  if (x.rank() != 4) throw InvalidInput("temporal_pool expects a T x H x W x C map");
  const long frames = static_cast<long>(x.dim(0));
  const std::size_t plane = x.size() / x.dim(0);
  const long half = window / 2;
  PooledPair<T> out{FeatureMap<T>(x.shape()), FeatureMap<T>(x.shape()), std::vector<std::uint32_t>(x.size())};
  const T inv = T{1} / static_cast<T>(window);
  for (long t = 0; t < frames; ++t) {
    T* mx = out.max.data() + t * plane;
    T* mn = out.mean.data() + t * plane;
    std::uint32_t* arg = out.argmax.data() + t * plane;
    for (long k = -half; k <= half; ++k) {
      const long src_t = std::clamp(t + k, 0L, frames - 1);
      const T* src = x.data() + src_t * plane;
      const bool first = k == -half;
      for (std::size_t i = 0; i < plane; ++i) {
        if (first || src[i] > mx[i]) {
          mx[i] = src[i];
          arg[i] = static_cast<std::uint32_t>(src_t);
        }
        mn[i] += src[i];
      }
    }
    for (std::size_t i = 0; i < plane; ++i) mn[i] *= inv;
  }
  return out;
}

/// Parameters of the two width-1 temporal convolutions of TCA.
template <typename T>
struct TcaParams {
  Dense<T> reduce;  // C -> C/r
  Dense<T> expand;  // C/r -> C
  std::size_t reduction = 16;

  TcaParams() = default;
  TcaParams(const std::string& name, std::size_t channels, std::size_t r) : reduction(r) {
    if (r == 0 || channels % r != 0) {
      throw InvalidConfig(name + ": channel count " + std::to_string(channels) + " not divisible by reduction " +
                          std::to_string(r));
    }
    reduce = Dense<T>(name + ".reduce", channels, channels / r);
    expand = Dense<T>(name + ".expand", channels / r, channels);
  }

  std::size_t channels() const { return reduce.in_features(); }

  void init(Rng& rng) {
    reduce.init(rng, InitKind::Linear);
    expand.init(rng, InitKind::Linear);
  }
  void collect(ParamRefs<T>& out) {
    reduce.collect(out);
    expand.collect(out);
  }
};

template <typename T>
struct TcaCache {
  FeatureMap<T> pooled_input;  // X, or X masked for S-TCA
  std::vector<std::uint32_t> argmax;
  ChannelDescriptor<T> diff, hidden, weights;
  std::optional<MaskGate> mask;
};

template <typename T>
void apply_mask_inplace(FeatureMap<T>& x, const MaskGate& mask) {
  if (mask.height != x.dim(1) || mask.width != x.dim(2)) {
    throw InvalidInput("mask gate " + std::to_string(mask.height) + "x" + std::to_string(mask.width) +
                       " does not match feature map " + shape_str(x.shape()));
  }
  const std::size_t c = x.dim(3), hw = mask.height * mask.width;
  for (std::size_t t = 0; t < x.dim(0); ++t)
    for (std::size_t p = 0; p < hw; ++p)
      if (!mask.bits[p]) std::fill_n(x.data() + (t * hw + p) * c, c, T{0});
}

/// E = sigmoid(W2 * ReLU(W1 * (spatial_mean(maxpool_t X) - spatial_mean(meanpool_t X)))).
/// When `mask` is given, X is replaced by X masked spatially inside the pooling path.
template <typename T>
AttentionWeights<T> tca_weights(const FeatureMap<T>& x, const TcaParams<T>& params, int window = 3,
                                const MaskGate* mask = nullptr, TcaCache<T>* cache = nullptr) {
  if (x.rank() != 4 || x.dim(3) != params.channels()) {
    throw InvalidInput("tca_weights: input " + shape_str(x.shape()) + " has wrong channel count");
  }
  FeatureMap<T> xm = x;
  if (mask) apply_mask_inplace(xm, *mask);
  PooledPair<T> pooled = temporal_pool(xm, window);
  ChannelDescriptor<T> diff = spatial_mean(pooled.max);
  const ChannelDescriptor<T> mean_desc = spatial_mean(pooled.mean);
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] -= mean_desc[i];
  ChannelDescriptor<T> hidden = relu(params.reduce.forward(diff));
  AttentionWeights<T> e = sigmoid(params.expand.forward(hidden));
  if (cache) {
    cache->pooled_input = std::move(xm);
    cache->argmax = std::move(pooled.argmax);
    cache->diff = std::move(diff);
    cache->hidden = std::move(hidden);
    cache->weights = e;
    if (mask) cache->mask = *mask;
    else cache->mask.reset();
  }
  return e;
}

/// X' = X * E + X, with E broadcast over the spatial axes.
template <typename T>
FeatureMap<T> tca_apply(const FeatureMap<T>& x, const AttentionWeights<T>& e) {
  if (x.rank() != 4 || e.rank() != 2 || e.dim(0) != x.dim(0) || e.dim(1) != x.dim(3)) {
    throw InvalidInput("tca_apply: weights " + shape_str(e.shape()) + " do not match features " + shape_str(x.shape()));
  }
  FeatureMap<T> y(x.shape());
  const std::size_t hw = x.dim(1) * x.dim(2), c = x.dim(3);
  for (std::size_t t = 0; t < x.dim(0); ++t)
    for (std::size_t p = 0; p < hw; ++p)
      for (std::size_t k = 0; k < c; ++k) {
        const std::size_t i = (t * hw + p) * c + k;
        y[i] = x[i] * e.at(t, k) + x[i];
      }
  return y;
}

/// Backward of tca_apply(x, tca_weights(x, ...)). Accumulates parameter
/// gradients and returns dL/dX through both the residual and gate paths.
template <typename T>
FeatureMap<T> tca_backward(const FeatureMap<T>& x, const TcaCache<T>& cache, TcaParams<T>& params,
                           const FeatureMap<T>& gy, int window = 3) {
  const std::size_t frames = x.dim(0), hw = x.dim(1) * x.dim(2), c = x.dim(3);
  const AttentionWeights<T>& e = cache.weights;
  FeatureMap<T> gx(x.shape());
  ChannelDescriptor<T> gz({frames, c});
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t p = 0; p < hw; ++p)
      for (std::size_t k = 0; k < c; ++k) {
        const std::size_t i = (t * hw + p) * c + k;
        gx[i] = gy[i] * (T{1} + e.at(t, k));
        gz.at(t, k) += gy[i] * x[i];
      }
  for (std::size_t i = 0; i < gz.size(); ++i) gz[i] *= e[i] * (T{1} - e[i]);
  ChannelDescriptor<T> gh = params.expand.backward(cache.hidden, gz);
  relu_backward_inplace(cache.hidden, gh);
  const ChannelDescriptor<T> gdiff = params.reduce.backward(cache.diff, gh);

  // d(diff)/d(pooled max) = +1/HW, d(diff)/d(pooled mean) = -1/HW.
  FeatureMap<T> gxm(x.shape());
  const long half = window / 2;
  const T inv_hw = T{1} / static_cast<T>(hw);
  const T inv_win = T{1} / static_cast<T>(window);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t p = 0; p < hw; ++p)
      for (std::size_t k = 0; k < c; ++k) {
        const std::size_t i = (t * hw + p) * c + k;
        const T g = gdiff.at(t, k) * inv_hw;
        gxm[(cache.argmax[i] * hw + p) * c + k] += g;
        for (long d = -half; d <= half; ++d) {
          const long st = std::clamp(static_cast<long>(t) + d, 0L, static_cast<long>(frames) - 1);
          gxm[(static_cast<std::size_t>(st) * hw + p) * c + k] -= g * inv_win;
        }
      }
  if (cache.mask) apply_mask_inplace(gxm, *cache.mask);
  gx += gxm;
  return gx;
}

/// Spatial max-pool (stride 1, same size) of a probability map followed by
/// binarization at `threshold`.
inline MaskGate dilate_mask(const Tensor<double>& prob, int kernel, double threshold = 0.5) {
  if (kernel < 1 || kernel % 2 == 0) throw InvalidConfig("dilation kernel must be odd and >= 1");
  const long h = static_cast<long>(prob.dim(0)), w = static_cast<long>(prob.dim(1)), half = kernel / 2;
  MaskGate gate = MaskGate::zeros(prob.dim(0), prob.dim(1));
  for (long i = 0; i < h; ++i)
    for (long j = 0; j < w; ++j) {
      double m = -1.0;
      for (long di = -half; di <= half; ++di)
        for (long dj = -half; dj <= half; ++dj) {
          const long y = i + di, x = j + dj;
          if (y >= 0 && x >= 0 && y < h && x < w) m = std::max(m, prob.at(y, x));
        }
      gate.bits[i * w + j] = m >= threshold ? 1 : 0;
    }
  return gate;
}

/// Adaptive area averaging of an H x W map to out_h x out_w.
inline Tensor<double> area_downsample(const Tensor<double>& prob, std::size_t out_h, std::size_t out_w) {
  const std::size_t h = prob.dim(0), w = prob.dim(1);
  Tensor<double> out({out_h, out_w});
  for (std::size_t i = 0; i < out_h; ++i) {
    const std::size_t y0 = i * h / out_h, y1 = ((i + 1) * h + out_h - 1) / out_h;
    for (std::size_t j = 0; j < out_w; ++j) {
      const std::size_t x0 = j * w / out_w, x1 = ((j + 1) * w + out_w - 1) / out_w;
      double s = 0;
      for (std::size_t y = y0; y < y1; ++y)
        for (std::size_t x = x0; x < x1; ++x) s += prob.at(y, x);
      out.at(i, j) = s / static_cast<double>((y1 - y0) * (x1 - x0));
    }
  }
  return out;
}

/// Full-resolution LV probability -> binary gate at feature resolution.
inline MaskGate gate_from_probability(const Tensor<double>& prob, std::size_t feat_h, std::size_t feat_w, int kernel,
                                      double threshold) {
  return dilate_mask(area_downsample(prob, feat_h, feat_w), kernel, threshold);
}

/// Cached activations for one forward pass through an AttentionBlock.
template <typename T>
struct BlockCache {
  FeatureMap<T> input;
  TcaCache<T> tca;
  ChannelDescriptor<T> desc, hidden, diff, weights;
  bool fell_back = false;
};

/// One attention stage: identity, TCA, S-TCA, SE or ME. Every mode maps
/// T x H x W x C to the same shape.
template <typename T>
class AttentionBlock {
 public:
  AttentionBlock() = default;
  AttentionBlock(const std::string& name, Mode mode, std::size_t channels, std::size_t reduction, int window = 3)
      : mode_(mode), window_(window) {
    if (window < 1 || window % 2 == 0) throw InvalidConfig(name + ": temporal pooling window must be odd");
    switch (mode) {
      case Mode::None: break;
      case Mode::Tca:
      case Mode::Stca: tca_ = TcaParams<T>(name, channels, reduction); break;
      case Mode::Se:
      case Mode::Me: {
        if (reduction == 0 || channels % reduction != 0) {
          throw InvalidConfig(name + ": channel count not divisible by reduction");
        }
        tca_.reduce = Dense<T>(name + ".reduce", channels, channels / reduction);
        tca_.expand = Dense<T>(name + ".expand", channels / reduction, channels);
        tca_.reduction = reduction;
        break;
      }
    }
  }

  Mode mode() const { return mode_; }
  int window() const { return window_; }
  TcaParams<T>& params() { return tca_; }
  const TcaParams<T>& params() const { return tca_; }

  void init(Rng& rng) {
    if (mode_ != Mode::None) tca_.init(rng);
  }
  void collect(ParamRefs<T>& out) {
    if (mode_ != Mode::None) tca_.collect(out);
  }

  FeatureMap<T> forward(const FeatureMap<T>& x, BlockCache<T>* cache, const MaskGate* mask = nullptr) const {
    if (cache) cache->input = x;
    switch (mode_) {
      case Mode::None: return x;
      case Mode::Tca: return excite(x, nullptr, cache);
      case Mode::Stca: {
        if (!mask) throw InvalidInput("S-TCA block requires a mask gate");
        if (!mask->any()) {
          static std::size_t fallbacks = 0;
          log::warn_throttled(fallbacks, "S-TCA mask is empty; falling back to plain TCA");
          if (cache) cache->fell_back = true;
          return excite(x, nullptr, cache);
        }
        return excite(x, mask, cache);
      }
      case Mode::Se: return se_forward(x, cache);
      case Mode::Me: return me_forward(x, cache);
    }
    return x;
  }

  FeatureMap<T> backward(const BlockCache<T>& cache, const FeatureMap<T>& gy) {
    switch (mode_) {
      case Mode::None: return gy;
      case Mode::Tca:
      case Mode::Stca: return tca_backward(cache.input, cache.tca, tca_, gy, window_);
      case Mode::Se: return se_backward(cache, gy);
      case Mode::Me: return me_backward(cache, gy);
    }
    return gy;
  }

 private:
  FeatureMap<T> excite(const FeatureMap<T>& x, const MaskGate* mask, BlockCache<T>* cache) const {
    const AttentionWeights<T> e = tca_weights(x, tca_, window_, mask, cache ? &cache->tca : nullptr);
    return tca_apply(x, e);
  }

  // SE: X * sigmoid(W2 ReLU(W1 GAP(X))), no residual.
  FeatureMap<T> se_forward(const FeatureMap<T>& x, BlockCache<T>* cache) const {
    check_channels(x);
    ChannelDescriptor<T> desc = spatial_mean(x);
    ChannelDescriptor<T> hidden = relu(tca_.reduce.forward(desc));
    AttentionWeights<T> e = sigmoid(tca_.expand.forward(hidden));
    FeatureMap<T> y(x.shape());
    const std::size_t hw = x.dim(1) * x.dim(2), c = x.dim(3);
    for (std::size_t t = 0; t < x.dim(0); ++t)
      for (std::size_t p = 0; p < hw; ++p)
        for (std::size_t k = 0; k < c; ++k) {
          const std::size_t i = (t * hw + p) * c + k;
          y[i] = x[i] * e.at(t, k);
        }
    if (cache) {
      cache->desc = std::move(desc);
      cache->hidden = std::move(hidden);
      cache->weights = std::move(e);
    }
    return y;
  }

  FeatureMap<T> se_backward(const BlockCache<T>& cache, const FeatureMap<T>& gy) {
    const FeatureMap<T>& x = cache.input;
    const AttentionWeights<T>& e = cache.weights;
    const std::size_t frames = x.dim(0), hw = x.dim(1) * x.dim(2), c = x.dim(3);
    FeatureMap<T> gx(x.shape());
    ChannelDescriptor<T> gz({frames, c});
    for (std::size_t t = 0; t < frames; ++t)
      for (std::size_t p = 0; p < hw; ++p)
        for (std::size_t k = 0; k < c; ++k) {
          const std::size_t i = (t * hw + p) * c + k;
          gx[i] = gy[i] * e.at(t, k);
          gz.at(t, k) += gy[i] * x[i];
        }
    for (std::size_t i = 0; i < gz.size(); ++i) gz[i] *= e[i] * (T{1} - e[i]);
    ChannelDescriptor<T> gh = tca_.expand.backward(cache.hidden, gz);
    relu_backward_inplace(cache.hidden, gh);
    spatial_mean_backward(tca_.reduce.backward(cache.desc, gh), gx);
    return gx;
  }

  // ME: reduced descriptors of frame t+1 minus frame t (zero for the last
  // frame), expanded and squashed; applied with a residual.
  FeatureMap<T> me_forward(const FeatureMap<T>& x, BlockCache<T>* cache) const {
    check_channels(x);
    ChannelDescriptor<T> desc = spatial_mean(x);
    const ChannelDescriptor<T> reduced = tca_.reduce.forward(desc);
    const std::size_t frames = x.dim(0), cr = reduced.dim(1);
    ChannelDescriptor<T> diff({frames, cr});
    for (std::size_t t = 0; t + 1 < frames; ++t)
      for (std::size_t k = 0; k < cr; ++k) diff.at(t, k) = reduced.at(t + 1, k) - reduced.at(t, k);
    AttentionWeights<T> e = sigmoid(tca_.expand.forward(diff));
    FeatureMap<T> y = tca_apply(x, e);
    if (cache) {
      cache->desc = std::move(desc);
      cache->diff = std::move(diff);
      cache->weights = std::move(e);
    }
    return y;
  }

  FeatureMap<T> me_backward(const BlockCache<T>& cache, const FeatureMap<T>& gy) {
    const FeatureMap<T>& x = cache.input;
    const AttentionWeights<T>& e = cache.weights;
    const std::size_t frames = x.dim(0), hw = x.dim(1) * x.dim(2), c = x.dim(3);
    FeatureMap<T> gx(x.shape());
    ChannelDescriptor<T> gz({frames, c});
    for (std::size_t t = 0; t < frames; ++t)
      for (std::size_t p = 0; p < hw; ++p)
        for (std::size_t k = 0; k < c; ++k) {
          const std::size_t i = (t * hw + p) * c + k;
          gx[i] = gy[i] * (T{1} + e.at(t, k));
          gz.at(t, k) += gy[i] * x[i];
        }
    for (std::size_t i = 0; i < gz.size(); ++i) gz[i] *= e[i] * (T{1} - e[i]);
    const ChannelDescriptor<T> gd = tca_.expand.backward(cache.diff, gz);
    const std::size_t cr = gd.dim(1);
    ChannelDescriptor<T> gr({frames, cr});
    for (std::size_t t = 0; t + 1 < frames; ++t)
      for (std::size_t k = 0; k < cr; ++k) {
        gr.at(t + 1, k) += gd.at(t, k);
        gr.at(t, k) -= gd.at(t, k);
      }
    spatial_mean_backward(tca_.reduce.backward(cache.desc, gr), gx);
    return gx;
  }

  void check_channels(const FeatureMap<T>& x) const {
    if (x.rank() != 4 || x.dim(3) != tca_.channels()) {
      throw InvalidInput(std::string(mode_name(mode_)) + " block: input " + shape_str(x.shape()) +
                         " has wrong channel count");
    }
  }

  Mode mode_ = Mode::None;
  int window_ = 3;
  TcaParams<T> tca_;
};

}  // namespace echoef::attention
