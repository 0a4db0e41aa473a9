#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "echoef/losses.hpp"
#include "echoef/nn/conv.hpp"
#include "echoef/nn/optim.hpp"
#include "echoef/synthdata.hpp"

namespace echoef::pseudo {

using synth::FrameStack;

/// The two annotated frames of a video.
struct SparseLabel {
  std::size_t ed_frame = 0, es_frame = 0;
  std::vector<std::uint8_t> ed_mask, es_mask;
  std::vector<std::uint8_t> ed_pixels, es_pixels;
  std::size_t height = 0, width = 0;

  static SparseLabel from_video(const synth::SyntheticVideo& v) {
    SparseLabel s;
    s.ed_frame = v.ed_index;
    s.es_frame = v.es_index;
    s.height = v.frames.height;
    s.width = v.frames.width;
    auto copy = [](std::span<const std::uint8_t> src) { return std::vector<std::uint8_t>(src.begin(), src.end()); };
    s.ed_mask = copy(v.masks.frame(v.ed_index));
    s.es_mask = copy(v.masks.frame(v.es_index));
    s.ed_pixels = copy(v.frames.frame(v.ed_index));
    s.es_pixels = copy(v.frames.frame(v.es_index));
    return s;
  }
};

struct PseudoLabelSet {
  std::vector<std::uint8_t> ed_mask, es_mask;
  std::size_t ed_source = 0, es_source = 0;  // clip-frame indices
  loss::QualityWeight alpha;
  bool low_quality = false;
};

struct TeacherConfig {
  std::size_t height = 64, width = 64;
  std::vector<std::size_t> channels{8, 16, 16, 16};  // full, /2, /4, /8 resolution
  OptimizerConfig optimizer{"adam", 3e-3, 0.9, 0.0, 0.0, 0, 0.1};
  std::size_t epochs = 40;
  std::size_t batch = 8;

  void validate() const {
    if (channels.size() != 4) throw InvalidConfig("teacher needs 4 channel widths");
    if (height % 8 != 0 || width % 8 != 0) throw InvalidConfig("teacher input size must be divisible by 8");
  }
};

/// Per-frame zero-mean unit-variance N x H x W x 1 batch.
template <typename T>
Tensor<T> normalize_frames(const std::vector<std::span<const std::uint8_t>>& frames, std::size_t h, std::size_t w) {
  Tensor<T> out({frames.size(), h, w, 1});
  for (std::size_t n = 0; n < frames.size(); ++n) {
    const auto& f = frames[n];
    double sum = 0, sq = 0;
    for (auto v : f) {
      sum += v;
      sq += double(v) * double(v);
    }
    const double cnt = static_cast<double>(f.size());
    const double mean = sum / cnt, var = std::max(0.0, sq / cnt - mean * mean);
    const double inv = var > 1e-12 ? 1.0 / std::sqrt(var) : 1.0;
    for (std::size_t i = 0; i < f.size(); ++i) out[n * h * w + i] = static_cast<T>((f[i] - mean) * inv);
  }
  return out;
}

/// Small 2-D encoder-decoder with three stride-2 stages and skip connections.
/// Frames are batched along the leading axis; all kernels are 1 x k x k.
template <typename T>
class Teacher {
 public:
  struct Cache {
    std::vector<typename Conv3d<T>::Cache> conv;
    std::vector<Tensor<T>> act;  // post-ReLU outputs, indexed like conv
    std::vector<Tensor<T>> cat;  // decoder concatenations
    std::vector<Shape> up_from;
  };

  Teacher() = default;
  explicit Teacher(const TeacherConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const auto& c = cfg_.channels;
    auto conv = [&](const std::string& n, std::size_t in, std::size_t out, std::size_t stride, std::size_t k = 3) {
      convs_.emplace_back("teacher." + n, ConvSpec{in, out, {1, k, k}, {1, stride, stride}, {1, 1, 1}});
    };
    conv("enc0", 1, c[0], 1);
    conv("enc1", c[0], c[1], 2);
    conv("enc2", c[1], c[2], 2);
    conv("enc3", c[2], c[3], 2);
    conv("dec2", c[3] + c[2], c[2], 1);
    conv("dec1", c[2] + c[1], c[1], 1);
    conv("dec0", c[1] + c[0], c[0], 1);
    conv("out", c[0], 1, 1, 1);
  }

  const TeacherConfig& config() const { return cfg_; }

  void init(Rng& rng) {
    for (std::size_t i = 0; i < convs_.size(); ++i) convs_[i].init(rng, i + 1 == convs_.size() ? InitKind::Linear : InitKind::Relu);
  }
  void collect(ParamRefs<T>& out) {
    for (auto& c : convs_) c.collect(out);
  }

  /// Logits N x H x W x 1.
  Tensor<T> forward(const Tensor<T>& x, Cache* cache = nullptr) const {
    Cache local;
    Cache& k = cache ? *cache : local;
    k.conv.assign(convs_.size(), {});
    k.act.assign(convs_.size(), {});
    k.cat.assign(3, {});
    k.up_from.assign(3, {});
    auto run = [&](std::size_t i, const Tensor<T>& in) -> const Tensor<T>& {
      k.act[i] = relu(convs_[i].forward(in, &k.conv[i]));
      return k.act[i];
    };
    run(0, x);
    run(1, k.act[0]);
    run(2, k.act[1]);
    run(3, k.act[2]);
    const Tensor<T>* deep = &k.act[3];
    for (std::size_t d = 0; d < 3; ++d) {
      const std::size_t skip = 2 - d;  // enc2, enc1, enc0
      const Tensor<T>& s = k.act[skip];
      k.up_from[d] = deep->shape();
      const Tensor<T> up = resize_bilinear(*deep, s.dim(1), s.dim(2));
      k.cat[d] = concat_channels<T>({&up, &s});
      deep = &run(4 + d, k.cat[d]);
    }
    return convs_[7].forward(*deep, &k.conv[7]);
  }

  void backward(Cache& k, const Tensor<T>& g_logits) {
    Tensor<T> g = convs_[7].backward(k.conv[7], g_logits);
    std::vector<Tensor<T>> g_skip(3);
    for (std::size_t d = 3; d-- > 0;) {
      relu_backward_inplace(k.act[4 + d], g);
      const Tensor<T> gc = convs_[4 + d].backward(k.conv[4 + d], g);
      const std::size_t skip = 2 - d;
      auto parts = split_channels(gc, {k.up_from[d].back(), k.act[skip].dim(3)});
      g_skip[skip] = std::move(parts[1]);
      g = resize_bilinear_backward(parts[0], k.up_from[d]);
    }
    // g now flows into enc3's output.
    for (std::size_t i = 4; i-- > 0;) {
      if (i < 3) g += g_skip[i];
      relu_backward_inplace(k.act[i], g);
      g = convs_[i].backward(k.conv[i], g, i > 0);
    }
  }

 private:
  TeacherConfig cfg_;
  std::vector<Conv3d<T>> convs_;
};

struct TeacherTrainLog {
  std::vector<double> epoch_loss;
};

/// Trains on the annotated ED/ES frames only. Deterministic given seed.
template <typename T>
Teacher<T> train_teacher(const std::vector<SparseLabel>& labels, const TeacherConfig& cfg, std::uint64_t seed,
                         TeacherTrainLog* log_out = nullptr) {
  if (labels.empty()) throw InvalidInput("teacher training set is empty");
  Rng rng(seed);
  Teacher<T> teacher(cfg);
  teacher.init(rng);
  ParamRefs<T> params;
  teacher.collect(params);
  Optimizer<T> opt(cfg.optimizer, params);

  struct Sample {
    const std::vector<std::uint8_t>* pixels;
    const std::vector<std::uint8_t>* mask;
  };
  std::vector<Sample> samples;
  for (const auto& l : labels) {
    if (l.height != cfg.height || l.width != cfg.width) throw InvalidInput("sparse label size does not match teacher");
    samples.push_back({&l.ed_pixels, &l.ed_mask});
    samples.push_back({&l.es_pixels, &l.es_mask});
  }
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(samples.begin(), samples.end(), rng);
    double epoch_loss = 0;
    for (std::size_t start = 0; start < samples.size(); start += cfg.batch) {
      const std::size_t end = std::min(samples.size(), start + cfg.batch);
      std::vector<std::span<const std::uint8_t>> frames;
      std::vector<std::uint8_t> target;
      for (std::size_t i = start; i < end; ++i) {
        frames.emplace_back(*samples[i].pixels);
        target.insert(target.end(), samples[i].mask->begin(), samples[i].mask->end());
      }
      const Tensor<T> x = normalize_frames<T>(frames, cfg.height, cfg.width);
      typename Teacher<T>::Cache cache;
      const Tensor<T> logits = teacher.forward(x, &cache);
      std::vector<T> g;
      const T l = loss::bce_with_logits<T>(logits.values(), target, loss::PixelReduction::Mean, &g);
      epoch_loss += static_cast<double>(l) * static_cast<double>(end - start);
      zero_grads(params);
      teacher.backward(cache, Tensor<T>(logits.shape(), std::move(g)));
      opt.step(cfg.optimizer.lr_at(epoch), 1.0);
    }
    if (log_out) log_out->epoch_loss.push_back(epoch_loss / static_cast<double>(samples.size()));
  }
  return teacher;
}

/// Frame-independent inference; foreground where probability >= 0.5.
template <typename T>
FrameStack infer_masks(const Teacher<T>& teacher, const FrameStack& clip, std::size_t chunk = 16) {
  FrameStack out(clip.frames, clip.height, clip.width);
  for (std::size_t start = 0; start < clip.frames; start += chunk) {
    const std::size_t end = std::min(clip.frames, start + chunk);
    std::vector<std::span<const std::uint8_t>> frames;
    for (std::size_t f = start; f < end; ++f) frames.push_back(clip.frame(f));
    const Tensor<T> logits = teacher.forward(normalize_frames<T>(frames, clip.height, clip.width));
    for (std::size_t i = 0; i < logits.size(); ++i) out.data[start * clip.plane() + i] = logits[i] >= T{0} ? 1 : 0;
  }
  return out;
}

/// ED = the frame of largest mask area, ES = smallest; ties go to the
/// earlier frame. All-empty masks yield a low-quality set with alpha 0.
inline PseudoLabelSet select_pseudo(const FrameStack& masks) {
  if (masks.frames < 2) throw InvalidInput("select_pseudo needs at least two frames");
  std::vector<std::size_t> areas(masks.frames);
  for (std::size_t f = 0; f < masks.frames; ++f) areas[f] = masks.count_nonzero(f);
  PseudoLabelSet set;
  set.ed_source = static_cast<std::size_t>(std::max_element(areas.begin(), areas.end()) - areas.begin());
  set.es_source = static_cast<std::size_t>(std::min_element(areas.begin(), areas.end()) - areas.begin());
  const auto ed = masks.frame(set.ed_source), es = masks.frame(set.es_source);
  set.ed_mask.assign(ed.begin(), ed.end());
  set.es_mask.assign(es.begin(), es.end());
  set.low_quality = areas[set.ed_source] == 0;
  return set;
}

inline std::vector<std::size_t> mask_areas(const FrameStack& masks) {
  std::vector<std::size_t> a(masks.frames);
  for (std::size_t f = 0; f < masks.frames; ++f) a[f] = masks.count_nonzero(f);
  return a;
}

/// Alpha from teacher masks on the two annotated frames.
inline loss::QualityWeight quality_from_masks(std::span<const std::uint8_t> truth_ed, std::span<const std::uint8_t> pred_ed,
                                              std::span<const std::uint8_t> truth_es, std::span<const std::uint8_t> pred_es) {
  return loss::QualityWeight::from_dice(loss::dsc(truth_ed, pred_ed), loss::dsc(truth_es, pred_es));
}

template <typename T>
loss::QualityWeight quality_weight(const Teacher<T>& teacher, const SparseLabel& label) {
  FrameStack pair(2, label.height, label.width);
  std::copy(label.ed_pixels.begin(), label.ed_pixels.end(), pair.frame(0).begin());
  std::copy(label.es_pixels.begin(), label.es_pixels.end(), pair.frame(1).begin());
  const FrameStack pred = infer_masks(teacher, pair);
  return quality_from_masks(label.ed_mask, pred.frame(0), label.es_mask, pred.frame(1));
}

/// Pseudo-labels for one clip: teacher masks gathered at the clip's frame
/// indices, extremes selected, alpha attached (0 if low quality).
inline PseudoLabelSet pseudo_for_clip(const FrameStack& teacher_masks, const std::vector<std::size_t>& clip_idx,
                                      double alpha) {
  PseudoLabelSet set = select_pseudo(synth::gather_frames(teacher_masks, clip_idx));
  set.alpha.alpha = set.low_quality ? 0.0 : alpha;
  return set;
}

/// Mean per-frame Dice between teacher masks and reference masks.
inline double mean_dice(const FrameStack& pred, const FrameStack& truth) {
  double s = 0;
  for (std::size_t f = 0; f < pred.frames; ++f) s += loss::dsc(pred.frame(f), truth.frame(f));
  return s / static_cast<double>(pred.frames);
}

}  // namespace echoef::pseudo
