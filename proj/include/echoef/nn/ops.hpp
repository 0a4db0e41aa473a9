#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "echoef/tensor.hpp"

namespace echoef {

template <typename T>
T sigmoid(T x) {
  // Split by sign so exp never overflows.
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
  return y;
}

/// Gradient through ReLU given the layer's output (y > 0 iff x > 0).
template <typename T>
void relu_backward_inplace(const Tensor<T>& y, Tensor<T>& g) {
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(y[i] > T{0})) g[i] = T{0};
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid(x[i]);
  return y;
}

template <typename T>
T log_sum_exp(std::span<const T> v) {
  const T m = *std::max_element(v.begin(), v.end());
  T s = 0;
  for (T x : v) s += std::exp(x - m);
  return m + std::log(s);
}

template <typename T>
std::vector<T> softmax(std::span<const T> v) {
  const T m = *std::max_element(v.begin(), v.end());
  std::vector<T> p(v.size());
  T s = 0;
  for (std::size_t i = 0; i < v.size(); ++i) s += (p[i] = std::exp(v[i] - m));
  for (auto& x : p) x /= s;
  return p;
}

/// Given softmax output p and dL/dp, returns dL/dlogits.
template <typename T>
std::vector<T> softmax_backward(std::span<const T> p, std::span<const T> gp) {
  T dot = 0;
  for (std::size_t i = 0; i < p.size(); ++i) dot += p[i] * gp[i];
  std::vector<T> g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) g[i] = p[i] * (gp[i] - dot);
  return g;
}

/// Global average over the spatial axes: T x H x W x C -> T x C.
template <typename T>
Tensor<T> spatial_mean(const Tensor<T>& x) {
  const std::size_t t = x.dim(0), hw = x.dim(1) * x.dim(2), c = x.dim(3);
  Tensor<T> out({t, c});
  for (std::size_t f = 0; f < t; ++f) {
    const T* src = x.data() + f * hw * c;
    T* dst = out.data() + f * c;
    for (std::size_t p = 0; p < hw; ++p)
      for (std::size_t k = 0; k < c; ++k) dst[k] += src[p * c + k];
    for (std::size_t k = 0; k < c; ++k) dst[k] /= static_cast<T>(hw);
  }
  return out;
}

/// Adds the gradient of spatial_mean into gx (shape T x H x W x C).
template <typename T>
void spatial_mean_backward(const Tensor<T>& g, Tensor<T>& gx) {
  const std::size_t t = gx.dim(0), hw = gx.dim(1) * gx.dim(2), c = gx.dim(3);
  const T inv = T{1} / static_cast<T>(hw);
  for (std::size_t f = 0; f < t; ++f)
    for (std::size_t p = 0; p < hw; ++p)
      for (std::size_t k = 0; k < c; ++k) gx[(f * hw + p) * c + k] += g[f * c + k] * inv;
}

/// Mean over every axis but the last: T x H x W x C -> C.
template <typename T>
Tensor<T> global_mean(const Tensor<T>& x) {
  const std::size_t c = x.dim(x.rank() - 1), n = x.size() / c;
  Tensor<T> out({c});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < c; ++k) out[k] += x[i * c + k];
  for (std::size_t k = 0; k < c; ++k) out[k] /= static_cast<T>(n);
  return out;
}

template <typename T>
Tensor<T> global_mean_backward(const Tensor<T>& g, const Shape& x_shape) {
  Tensor<T> gx(x_shape);
  const std::size_t c = x_shape.back(), n = gx.size() / c;
  const T inv = T{1} / static_cast<T>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < c; ++k) gx[i * c + k] = g[k] * inv;
  return gx;
}

/// One axis of a half-pixel-centred bilinear resize (align_corners = false).
struct LinearAxis {
  std::vector<std::size_t> lo, hi;
  std::vector<double> w_hi;

  LinearAxis(std::size_t in, std::size_t out) : lo(out), hi(out), w_hi(out) {
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
      double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
      if (src < 0) src = 0;
      std::size_t i0 = static_cast<std::size_t>(std::floor(src));
      if (i0 > in - 1) i0 = in - 1;
      lo[o] = i0;
      hi[o] = std::min(i0 + 1, in - 1);
      w_hi[o] = src - static_cast<double>(i0);
    }
  }
};

/// Bilinear resize of the spatial axes of an N x H x W x C map.
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) {
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const LinearAxis ay(h, out_h), ax(w, out_w);
  Tensor<T> y({n, out_h, out_w, c});
  for (std::size_t f = 0; f < n; ++f)
    for (std::size_t i = 0; i < out_h; ++i) {
      const T wy = static_cast<T>(ay.w_hi[i]);
      for (std::size_t j = 0; j < out_w; ++j) {
        const T wx = static_cast<T>(ax.w_hi[j]);
        const T* p00 = &x.at(f, ay.lo[i], ax.lo[j], 0);
        const T* p01 = &x.at(f, ay.lo[i], ax.hi[j], 0);
        const T* p10 = &x.at(f, ay.hi[i], ax.lo[j], 0);
        const T* p11 = &x.at(f, ay.hi[i], ax.hi[j], 0);
        T* dst = &y.at(f, i, j, 0);
        for (std::size_t k = 0; k < c; ++k) {
          dst[k] = (T{1} - wy) * ((T{1} - wx) * p00[k] + wx * p01[k]) + wy * ((T{1} - wx) * p10[k] + wx * p11[k]);
        }
      }
    }
  return y;
}

template <typename T>
Tensor<T> resize_bilinear_backward(const Tensor<T>& gy, const Shape& x_shape) {
  const std::size_t n = x_shape[0], h = x_shape[1], w = x_shape[2], c = x_shape[3];
  const std::size_t out_h = gy.dim(1), out_w = gy.dim(2);
  const LinearAxis ay(h, out_h), ax(w, out_w);
  Tensor<T> gx(x_shape);
  for (std::size_t f = 0; f < n; ++f)
    for (std::size_t i = 0; i < out_h; ++i) {
      const T wy = static_cast<T>(ay.w_hi[i]);
      for (std::size_t j = 0; j < out_w; ++j) {
        const T wx = static_cast<T>(ax.w_hi[j]);
        const T* g = &gy.at(f, i, j, 0);
        T* p00 = &gx.at(f, ay.lo[i], ax.lo[j], 0);
        T* p01 = &gx.at(f, ay.lo[i], ax.hi[j], 0);
        T* p10 = &gx.at(f, ay.hi[i], ax.lo[j], 0);
        T* p11 = &gx.at(f, ay.hi[i], ax.hi[j], 0);
        for (std::size_t k = 0; k < c; ++k) {
          p00[k] += (T{1} - wy) * (T{1} - wx) * g[k];
          p01[k] += (T{1} - wy) * wx * g[k];
          p10[k] += wy * (T{1} - wx) * g[k];
          p11[k] += wy * wx * g[k];
        }
      }
    }
  return gx;
}

/// Concatenates N x H x W x C_i maps along channels.
template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& parts) {
  const Shape& s0 = parts.front()->shape();
  std::size_t c = 0;
  for (const auto* p : parts) c += p->dim(3);
  Tensor<T> out({s0[0], s0[1], s0[2], c});
  const std::size_t positions = s0[0] * s0[1] * s0[2];
  std::size_t offset = 0;
  for (const auto* p : parts) {
    const std::size_t ci = p->dim(3);
    for (std::size_t i = 0; i < positions; ++i)
      std::copy_n(p->data() + i * ci, ci, out.data() + i * c + offset);
    offset += ci;
  }
  return out;
}

/// Inverse of concat_channels for gradients.
template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& g, const std::vector<std::size_t>& widths) {
  const std::size_t c = g.dim(3), positions = g.size() / c;
  std::vector<Tensor<T>> out;
  std::size_t offset = 0;
  for (std::size_t ci : widths) {
    Tensor<T> part({g.dim(0), g.dim(1), g.dim(2), ci});
    for (std::size_t i = 0; i < positions; ++i) std::copy_n(g.data() + i * c + offset, ci, part.data() + i * ci);
    out.push_back(std::move(part));
    offset += ci;
  }
  return out;
}

}  // namespace echoef
