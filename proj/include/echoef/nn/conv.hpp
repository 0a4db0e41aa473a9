#pragma once

#include <array>
#include <cstring>
#include <string>

#include "echoef/nn/dense.hpp"

namespace echoef {

/// Geometry of a 3-D convolution over a T x H x W x C map. Padding is
/// zero and "same" for stride 1: pad = dilation * (kernel - 1) / 2.
struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::array<std::size_t, 3> kernel{1, 3, 3};
  std::array<std::size_t, 3> stride{1, 1, 1};
  std::array<std::size_t, 3> dilation{1, 1, 1};

  std::size_t taps() const { return kernel[0] * kernel[1] * kernel[2]; }
  std::size_t pad(int axis) const { return dilation[axis] * (kernel[axis] - 1) / 2; }
  std::size_t out_extent(int axis, std::size_t in) const {
    const std::size_t span = dilation[axis] * (kernel[axis] - 1) + 1;
    const std::size_t padded = in + 2 * pad(axis);
    if (padded < span) throw InvalidInput("convolution input extent too small");
    return (padded - span) / stride[axis] + 1;
  }
  std::size_t param_count() const { return taps() * in_channels * out_channels + out_channels; }
};

/// im2col + GEMM convolution. The weight is stored as (taps * Cin) x Cout.
template <typename T>
class Conv3d {
 public:
  struct Cache {
    Shape in_shape;
    RowMatrix<T> col;
  };

  Conv3d() = default;
  Conv3d(const std::string& name, ConvSpec spec)
      : weight(name + ".weight", {spec.taps() * spec.in_channels, spec.out_channels}),
        bias(name + ".bias", {spec.out_channels}),
        spec_(spec) {}

  const ConvSpec& spec() const { return spec_; }

  void init(Rng& rng, InitKind kind) {
    uniform_init(weight.value, fan_in_bound(spec_.taps() * spec_.in_channels, kind), rng);
    bias.value.fill(T{0});
  }

  Shape output_shape(const Shape& in) const {
    return {spec_.out_extent(0, in[0]), spec_.out_extent(1, in[1]), spec_.out_extent(2, in[2]), spec_.out_channels};
  }

  Tensor<T> forward(const Tensor<T>& x, Cache* cache) const {
    if (x.rank() != 4 || x.dim(3) != spec_.in_channels) {
      throw InvalidInput(weight.name + ": expected T x H x W x " + std::to_string(spec_.in_channels) + ", got " +
                         shape_str(x.shape()));
    }
    const Shape out_shape = output_shape(x.shape());
    const std::size_t positions = out_shape[0] * out_shape[1] * out_shape[2];
    const std::size_t cols = spec_.taps() * spec_.in_channels;
    RowMatrix<T> local;
    RowMatrix<T>& col = cache ? cache->col : local;
    im2col(x, out_shape, col);
    Tensor<T> y(out_shape);
    MatrixMap<T> ym(y.data(), positions, spec_.out_channels);
    ConstMatrixMap<T> wm(weight.value.data(), cols, spec_.out_channels);
    ym.noalias() = col * wm;
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias.value.data(), spec_.out_channels);
    ym.rowwise() += b;
    if (cache) cache->in_shape = x.shape();
    return y;
  }

  /// Accumulates parameter gradients. Returns dL/dx, or an empty tensor
  /// when the input gradient is not needed.
  Tensor<T> backward(const Cache& cache, const Tensor<T>& gy, bool want_input_grad = true) {
    const std::size_t positions = gy.size() / spec_.out_channels;
    const std::size_t cols = spec_.taps() * spec_.in_channels;
    ConstMatrixMap<T> gm(gy.data(), positions, spec_.out_channels);
    MatrixMap<T> gw(weight.grad.data(), cols, spec_.out_channels);
    gw.noalias() += cache.col.transpose() * gm;
    add_column_sums(gm, bias.grad.data());
    if (!want_input_grad) return {};
    ConstMatrixMap<T> wm(weight.value.data(), cols, spec_.out_channels);
    RowMatrix<T> gcol = gm * wm.transpose();
    Tensor<T> gx(cache.in_shape);
    col2im(gcol, gy.shape(), gx);
    return gx;
  }

  void collect(ParamRefs<T>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }

  Param<T> weight;
  Param<T> bias;

 private:
  // Visits every (output position, tap) pair whose input location lies
  // inside the map, passing row/column offsets into the col matrix.
  template <typename Fn>
  void for_each_tap(const Shape& in, const Shape& out, Fn&& fn) const {
    const std::size_t cin = spec_.in_channels;
    const std::size_t cols = spec_.taps() * cin;
    const long pt = static_cast<long>(spec_.pad(0)), ph = static_cast<long>(spec_.pad(1)),
               pw = static_cast<long>(spec_.pad(2));
    std::size_t row = 0;
    for (std::size_t to = 0; to < out[0]; ++to) {
      for (std::size_t ho = 0; ho < out[1]; ++ho) {
        for (std::size_t wo = 0; wo < out[2]; ++wo, ++row) {
          std::size_t tap = 0;
          for (std::size_t a = 0; a < spec_.kernel[0]; ++a) {
            const long ti = static_cast<long>(to * spec_.stride[0] + a * spec_.dilation[0]) - pt;
            for (std::size_t b = 0; b < spec_.kernel[1]; ++b) {
              const long hi = static_cast<long>(ho * spec_.stride[1] + b * spec_.dilation[1]) - ph;
              for (std::size_t c = 0; c < spec_.kernel[2]; ++c, ++tap) {
                const long wi = static_cast<long>(wo * spec_.stride[2] + c * spec_.dilation[2]) - pw;
                if (ti < 0 || hi < 0 || wi < 0 || ti >= static_cast<long>(in[0]) || hi >= static_cast<long>(in[1]) ||
                    wi >= static_cast<long>(in[2])) {
                  continue;
                }
                const std::size_t src = ((static_cast<std::size_t>(ti) * in[1] + static_cast<std::size_t>(hi)) * in[2] +
                                         static_cast<std::size_t>(wi)) *
                                        cin;
                fn(row * cols + tap * cin, src);
              }
            }
          }
        }
      }
    }
  }

  void im2col(const Tensor<T>& x, const Shape& out, RowMatrix<T>& col) const {
    const std::size_t positions = out[0] * out[1] * out[2];
    const std::size_t cin = spec_.in_channels;
    col.setZero(positions, spec_.taps() * cin);
    T* dst = col.data();
    const T* src = x.data();
    for_each_tap(x.shape(), out, [&](std::size_t d, std::size_t s) { std::memcpy(dst + d, src + s, cin * sizeof(T)); });
  }

  void col2im(const RowMatrix<T>& gcol, const Shape& out, Tensor<T>& gx) const {
    const std::size_t cin = spec_.in_channels;
    const T* src = gcol.data();
    T* dst = gx.data();
    for_each_tap(gx.shape(), out, [&](std::size_t g, std::size_t x) {
      for (std::size_t c = 0; c < cin; ++c) dst[x + c] += src[g + c];
    });
  }

  ConvSpec spec_;
};

}  // namespace echoef
