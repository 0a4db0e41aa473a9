#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "echoef/nn/dense.hpp"
#include "echoef/nn/ops.hpp"

namespace echoef::head {

/// Interval size l = 100 / M.
inline double interval_size(std::size_t anchors) { return 100.0 / static_cast<double>(anchors); }

/// Centre c_m = (m + 0.5) * l of anchor interval m.
inline double anchor_center(std::size_t m, std::size_t anchors) {
  return (static_cast<double>(m) + 0.5) * interval_size(anchors);
}

/// Ground-truth interval u and per-interval offsets v for an EF label.
struct AnchorCoding {
  std::size_t u = 0;
  std::vector<double> v;
  std::size_t anchors = 0;
};

inline AnchorCoding encode_label(double y, std::size_t anchors) {
  if (anchors < 2) throw InvalidConfig("need at least 2 anchor intervals");
  if (!(y >= 0.0 && y <= 100.0)) throw InvalidLabel("EF label " + std::to_string(y) + " outside [0,100]");
  const double l = interval_size(anchors);
  AnchorCoding code;
  code.anchors = anchors;
  code.u = std::min(static_cast<std::size_t>(std::floor(y / l)), anchors - 1);
  code.v.resize(anchors);
  for (std::size_t m = 0; m < anchors; ++m) code.v[m] = (y - anchor_center(m, anchors)) / l;
  return code;
}

template <typename T>
struct AnchorPrediction {
  std::vector<T> logits;
  std::vector<T> p;
  std::vector<T> o;
};

struct EfEstimate {
  double ef_hat = 0;
  std::size_t chosen_interval = 0;
  double offset = 0;
};

enum class DecodeMode { Argmax, Expectation };

inline DecodeMode parse_decode_mode(const std::string& s) {
  if (s == "argmax") return DecodeMode::Argmax;
  if (s == "expectation") return DecodeMode::Expectation;
  throw InvalidConfig("unknown decode mode '" + s + "'");
}

/// Argmax interval plus its offset (ties go to the lower index), clamped to
/// [0,100]. Expectation mode averages c_m + l * o_m under p.
template <typename T>
EfEstimate decode(const AnchorPrediction<T>& pred, DecodeMode mode = DecodeMode::Argmax) {
  const std::size_t anchors = pred.p.size();
  if (anchors < 2 || pred.o.size() != anchors) throw InvalidInput("decode: malformed anchor prediction");
  const double l = interval_size(anchors);
  EfEstimate est;
  est.chosen_interval = static_cast<std::size_t>(std::max_element(pred.p.begin(), pred.p.end()) - pred.p.begin());
  est.offset = static_cast<double>(pred.o[est.chosen_interval]);
  double value = anchor_center(est.chosen_interval, anchors) + l * est.offset;
  if (mode == DecodeMode::Expectation) {
    value = 0;
    for (std::size_t m = 0; m < anchors; ++m)
      value += static_cast<double>(pred.p[m]) * (anchor_center(m, anchors) + l * static_cast<double>(pred.o[m]));
  }
  est.ef_hat = std::clamp(value, 0.0, 100.0);
  return est;
}

/// Two sibling affine layers over the pooled feature: interval scores and offsets.
template <typename T>
class AnchorHead {
 public:
  AnchorHead() = default;
  AnchorHead(std::size_t features, std::size_t anchors)
      : cls("head.cls", features, anchors), reg("head.reg", features, anchors) {}

  std::size_t anchors() const { return cls.out_features(); }

  void init(Rng& rng) {
    cls.init(rng, InitKind::Linear);
    reg.init(rng, InitKind::Linear);
  }
  void collect(ParamRefs<T>& out) {
    cls.collect(out);
    reg.collect(out);
  }

  AnchorPrediction<T> forward(const Tensor<T>& feature) const {
    const Tensor<T> x = feature.reshaped({1, feature.size()});
    AnchorPrediction<T> pred;
    pred.logits = cls.forward(x).storage();
    pred.o = reg.forward(x).storage();
    pred.p = softmax<T>(pred.logits);
    return pred;
  }

  /// Returns dL/dfeature given dL/dlogits and dL/do.
  Tensor<T> backward(const Tensor<T>& feature, const std::vector<T>& g_logits, const std::vector<T>& g_offsets) {
    const Tensor<T> x = feature.reshaped({1, feature.size()});
    Tensor<T> gx = cls.backward(x, Tensor<T>({1, g_logits.size()}, g_logits));
    gx += reg.backward(x, Tensor<T>({1, g_offsets.size()}, g_offsets));
    return gx.reshaped({feature.size()});
  }

  Dense<T> cls;
  Dense<T> reg;
};

/// Direct regression baseline: EF percent = 100 * (w . f + b).
template <typename T>
class DirectHead {
 public:
  static constexpr double kScale = 100.0;

  DirectHead() = default;
  explicit DirectHead(std::size_t features) : fc("head.direct", features, 1) {}

  void init(Rng& rng) { fc.init(rng, InitKind::Linear); }
  void collect(ParamRefs<T>& out) { fc.collect(out); }

  /// Unclamped EF in percent.
  T forward(const Tensor<T>& feature) const {
    return static_cast<T>(kScale) * fc.forward(feature.reshaped({1, feature.size()}))[0];
  }

  Tensor<T> backward(const Tensor<T>& feature, T g_out) {
    const Tensor<T> g({1, 1}, std::vector<T>{g_out * static_cast<T>(kScale)});
    return fc.backward(feature.reshaped({1, feature.size()}), g).reshaped({feature.size()});
  }

  Dense<T> fc;
};

inline EfEstimate direct_estimate(double raw) {
  EfEstimate e;
  e.ef_hat = std::clamp(raw, 0.0, 100.0);
  e.offset = raw;
  return e;
}

}  // namespace echoef::head
