#pragma once

#include <Eigen/Dense>
#include <string>

#include "echoef/nn/param.hpp"

namespace echoef {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

/// out[c] += sum_r m(r, c), rows added in order. Eigen's vectorized
/// reductions round differently depending on buffer alignment, which
/// would make reruns differ in the last bits.
template <typename T>
void add_column_sums(const ConstMatrixMap<T>& m, T* out) {
  const auto cols = m.cols();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const T* row = m.data() + r * cols;
    for (Eigen::Index c = 0; c < cols; ++c) out[c] += row[c];
  }
}

/// Affine map applied to each row of an N x in matrix. Also serves as a
/// width-1 temporal convolution over a T x C descriptor.
template <typename T>
class Dense {
 public:
  Dense() = default;
  Dense(const std::string& name, std::size_t in, std::size_t out)
      : weight(name + ".weight", {in, out}), bias(name + ".bias", {out}) {}

  std::size_t in_features() const { return weight.value.dim(0); }
  std::size_t out_features() const { return weight.value.dim(1); }

  void init(Rng& rng, InitKind kind) {
    uniform_init(weight.value, fan_in_bound(in_features(), kind), rng);
    bias.value.fill(T{0});
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    const std::size_t n = x.size() / in_features();
    if (n * in_features() != x.size() || x.dim(x.rank() - 1) != in_features()) {
      throw InvalidInput(weight.name + ": input " + shape_str(x.shape()) + " does not end in " +
                         std::to_string(in_features()));
    }
    Shape out_shape = x.shape();
    out_shape.back() = out_features();
    Tensor<T> y(out_shape);
    ConstMatrixMap<T> xm(x.data(), n, in_features());
    ConstMatrixMap<T> wm(weight.value.data(), in_features(), out_features());
    MatrixMap<T> ym(y.data(), n, out_features());
    ym.noalias() = xm * wm;
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias.value.data(), out_features());
    ym.rowwise() += b;
    return y;
  }

  /// Accumulates parameter gradients; returns dL/dx.
  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& gy) {
    const std::size_t n = x.size() / in_features();
    ConstMatrixMap<T> xm(x.data(), n, in_features());
    ConstMatrixMap<T> gm(gy.data(), n, out_features());
    MatrixMap<T> gw(weight.grad.data(), in_features(), out_features());
    gw.noalias() += xm.transpose() * gm;
    add_column_sums(gm, bias.grad.data());
    Tensor<T> gx(x.shape());
    ConstMatrixMap<T> wm(weight.value.data(), in_features(), out_features());
    MatrixMap<T> gxm(gx.data(), n, in_features());
    gxm.noalias() = gm * wm.transpose();
    return gx;
  }

  void collect(ParamRefs<T>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }

  Param<T> weight;
  Param<T> bias;
};

}  // namespace echoef
