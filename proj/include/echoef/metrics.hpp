#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "echoef/model.hpp"
#include "echoef/synthdata.hpp"

namespace echoef::metrics {

using model::FeatureMap;

struct MetricReport {
  double mae = 0;
  double rmse = 0;
  std::optional<double> r2;  // undefined for n < 2 or zero label variance
  std::size_t n = 0;
  std::vector<double> residuals;  // y_pred - y_true

  double r2_or_nan() const { return r2 ? *r2 : std::numeric_limits<double>::quiet_NaN(); }
};

inline MetricReport compute_metrics(const std::vector<double>& y_true, const std::vector<double>& y_pred) {
  if (y_true.size() != y_pred.size()) throw InvalidInput("compute_metrics: length mismatch");
  if (y_true.empty()) throw InvalidInput("compute_metrics: no samples");
  MetricReport r;
  r.n = y_true.size();
  double abs_sum = 0, sq_sum = 0, mean = 0;
  for (std::size_t i = 0; i < r.n; ++i) {
    const double e = y_pred[i] - y_true[i];
    r.residuals.push_back(e);
    abs_sum += std::abs(e);
    sq_sum += e * e;
    mean += y_true[i];
  }
  const double n = static_cast<double>(r.n);
  mean /= n;
  r.mae = abs_sum / n;
  r.rmse = std::sqrt(sq_sum / n);
  if (r.n >= 2) {
    double tot = 0;
    for (double y : y_true) tot += (y - mean) * (y - mean);
    if (tot > 0) r.r2 = 1.0 - sq_sum / tot;
  }
  return r;
}

struct ClipSampling {
  std::size_t num_frames = 32;
  std::size_t stride = 2;
};

/// Clip specs for n random clips of `video_frames`; short videos fall back
/// to a single start at 0 with last-frame repetition.
inline std::vector<std::vector<std::size_t>> sample_clip_indices(std::size_t video_frames, const ClipSampling& s,
                                                                 std::size_t n_clips, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> out;
  const bool short_video = (s.num_frames - 1) * s.stride >= video_frames;
  for (std::size_t k = 0; k < n_clips; ++k) {
    if (short_video) {
      out.push_back(synth::clip_indices_padded(video_frames, {s.num_frames, s.stride, 0}));
    } else {
      out.push_back(synth::clip_indices(video_frames, synth::random_clip(video_frames, s.num_frames, s.stride, rng)));
    }
  }
  return out;
}

template <typename T>
FeatureMap<T> clip_tensor(const synth::FrameStack& frames, const std::vector<std::size_t>& idx) {
  const synth::FrameStack clip = synth::gather_frames(frames, idx);
  return backbone::prepare_clip<T, std::uint8_t>(clip.data, clip.frames, clip.height, clip.width);
}

/// Mean decoded EF over n_clips random clips; deterministic for fixed seed.
template <typename T>
double predict_video(const model::EfModel<T>& m, const synth::SyntheticVideo& video, std::size_t n_clips,
                     std::uint64_t seed) {
  if (n_clips == 0) throw InvalidInput("n_clips must be >= 1");
  const ClipSampling s{m.config().clip_frames, 2};
  double sum = 0;
  for (const auto& idx : sample_clip_indices(video.frames.frames, s, n_clips, seed)) {
    sum += m.forward(clip_tensor<T>(video.frames, idx)).estimate.ef_hat;
  }
  return sum / static_cast<double>(n_clips);
}

struct CamMap {
  Tensor<double> map;  // H_img x W_img in [0,1]
  Tensor<double> raw;  // feature resolution, before normalization
  std::size_t interval = 0;
};

/// Min-max normalization; a constant map normalizes to all zeros.
inline Tensor<double> minmax_normalize(const Tensor<double>& x) {
  const auto [lo, hi] = std::minmax_element(x.values().begin(), x.values().end());
  Tensor<double> out(x.shape());
  const double range = *hi - *lo;
  if (range <= 0) return out;
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - *lo) / range;
  return out;
}

/// ReLU(sum_c w[c, m] * mean_t A[t, h, w, c]) from final features and the
/// classification weights of interval m (argmax unless given).
inline CamMap cam_from_features(const Tensor<double>& final_features, const Tensor<double>& cls_weight,
                                std::size_t interval, std::size_t image_h, std::size_t image_w) {
  const std::size_t t = final_features.dim(0), h = final_features.dim(1), w = final_features.dim(2),
                    c = final_features.dim(3);
  CamMap cam;
  cam.interval = interval;
  Tensor<double> raw({1, h, w, 1});
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < c; ++k) {
        double a = 0;
        for (std::size_t f = 0; f < t; ++f) a += final_features.at(f, i, j, k);
        s += cls_weight.at(k, interval) * (a / static_cast<double>(t));
      }
      raw[i * w + j] = std::max(0.0, s);
    }
  cam.raw = raw.reshaped({h, w});
  cam.map = minmax_normalize(resize_bilinear(raw, image_h, image_w).reshaped({image_h, image_w}));
  return cam;
}

template <typename T>
CamMap cam(const model::EfModel<T>& m, const FeatureMap<T>& clip, std::optional<std::size_t> target_interval = {}) {
  if (!m.config().anchor_head()) throw UnsupportedOperation("CAM needs the anchor classification head");
  const model::Output<T> out = m.forward(clip);
  const std::size_t interval = target_interval ? *target_interval : out.estimate.chosen_interval;
  if (interval >= m.config().anchors) throw InvalidInput("CAM target interval out of range");
  return cam_from_features(out.final_features.template cast<double>(),
                           m.anchor_head().cls.weight.value.template cast<double>(), interval, m.config().image_height,
                           m.config().image_width);
}

struct CamMass {
  double inside_mean = 0;
  double outside_mean = 0;
};

/// Mean raw CAM value inside and outside `mask` after upsampling to image size.
inline CamMass cam_mass(const CamMap& c, std::span<const std::uint8_t> mask, std::size_t h, std::size_t w) {
  const Tensor<double> up =
      resize_bilinear(c.raw.reshaped({1, c.raw.dim(0), c.raw.dim(1), 1}), h, w).reshaped({h, w});
  double in = 0, out = 0;
  std::size_t n_in = 0, n_out = 0;
  for (std::size_t i = 0; i < up.size(); ++i) {
    if (mask[i]) {
      in += up[i];
      ++n_in;
    } else {
      out += up[i];
      ++n_out;
    }
  }
  return {n_in ? in / double(n_in) : 0.0, n_out ? out / double(n_out) : 0.0};
}

}  // namespace echoef::metrics
