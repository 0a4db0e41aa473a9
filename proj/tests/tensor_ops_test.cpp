#include <gtest/gtest.h>

#include "echoef/nn/conv.hpp"
#include "echoef/nn/ops.hpp"
#include "grad_check.hpp"

using namespace echoef;

namespace {

// Direct nested-loop convolution, independent of the im2col path.
Tensor<double> conv_reference(const Tensor<double>& x, const Conv3d<double>& conv) {
  const ConvSpec& s = conv.spec();
  const Shape out = conv.output_shape(x.shape());
  Tensor<double> y(out);
  for (std::size_t t = 0; t < out[0]; ++t)
    for (std::size_t i = 0; i < out[1]; ++i)
      for (std::size_t j = 0; j < out[2]; ++j)
        for (std::size_t o = 0; o < out[3]; ++o) {
          double acc = conv.bias.value[o];
          std::size_t tap = 0;
          for (std::size_t a = 0; a < s.kernel[0]; ++a)
            for (std::size_t b = 0; b < s.kernel[1]; ++b)
              for (std::size_t c = 0; c < s.kernel[2]; ++c, ++tap) {
                const long ti = long(t * s.stride[0] + a * s.dilation[0]) - long(s.pad(0));
                const long hi = long(i * s.stride[1] + b * s.dilation[1]) - long(s.pad(1));
                const long wi = long(j * s.stride[2] + c * s.dilation[2]) - long(s.pad(2));
                if (ti < 0 || hi < 0 || wi < 0 || ti >= long(x.dim(0)) || hi >= long(x.dim(1)) || wi >= long(x.dim(2)))
                  continue;
                for (std::size_t k = 0; k < s.in_channels; ++k)
                  acc += x.at(ti, hi, wi, k) * conv.weight.value.at(tap * s.in_channels + k, o);
              }
          y.at(t, i, j, o) = acc;
        }
  return y;
}

}  // namespace

TEST(Conv3d, MatchesNestedLoopReference) {
  Rng rng(3);
  for (const ConvSpec& spec : {ConvSpec{2, 3, {1, 3, 3}, {1, 2, 2}, {1, 1, 1}}, ConvSpec{3, 2, {3, 1, 1}, {2, 1, 1}, {1, 1, 1}},
                              ConvSpec{2, 2, {1, 3, 3}, {1, 1, 1}, {1, 2, 2}}}) {
    Conv3d<double> conv("c", spec);
    conv.init(rng, InitKind::Linear);
    uniform_init(conv.bias.value, 0.5, rng);
    Tensor<double> x({4, 7, 6, spec.in_channels});
    uniform_init(x, 1.0, rng);
    EXPECT_LT(max_abs_diff(conv.forward(x, nullptr), conv_reference(x, conv)), 1e-12);
  }
}

TEST(Conv3d, GradientsMatchFiniteDifferences) {
  Rng rng(5);
  Conv3d<double> conv("c", ConvSpec{2, 3, {3, 3, 3}, {2, 2, 1}, {1, 1, 2}});
  conv.init(rng, InitKind::Linear);
  Tensor<double> x({5, 6, 5, 2});
  uniform_init(x, 1.0, rng);
  const Shape out = conv.output_shape(x.shape());
  Tensor<double> probe(out);
  uniform_init(probe, 1.0, rng);
  auto loss = [&] { return testing_util::dot(conv.forward(x, nullptr), probe); };
  typename Conv3d<double>::Cache cache;
  conv.forward(x, &cache);
  ParamRefs<double> params;
  conv.collect(params);
  zero_grads(params);
  const Tensor<double> gx = conv.backward(cache, probe);
  for (auto* p : params) EXPECT_LT(testing_util::param_rel_error(*p, loss), 1e-6) << p->name;
  EXPECT_LT(testing_util::input_rel_error(x, gx, loss), 1e-6);
}

TEST(Ops, BilinearBackwardIsAdjointOfForward) {
  Rng rng(1);
  Tensor<double> x({1, 4, 3, 2});
  uniform_init(x, 1.0, rng);
  Tensor<double> g({1, 9, 7, 2});
  uniform_init(g, 1.0, rng);
  const double lhs = testing_util::dot(resize_bilinear(x, 9, 7), g);
  const double rhs = testing_util::dot(x, resize_bilinear_backward(g, x.shape()));
  EXPECT_NEAR(lhs, rhs, 1e-12);
}

TEST(Ops, BilinearOfConstantIsConstant) {
  Tensor<double> x({1, 3, 3, 1}, 2.5);
  const auto y = resize_bilinear(x, 12, 12);
  for (double v : y.values()) EXPECT_DOUBLE_EQ(v, 2.5);
}

TEST(Ops, SoftmaxBackwardMatchesFiniteDifferences) {
  std::vector<double> z{0.3, -1.2, 2.0, 0.1};
  std::vector<double> w{1.0, -2.0, 0.5, 3.0};
  auto f = [&](const std::vector<double>& v) {
    const auto p = softmax<double>(v);
    double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * w[i];
    return s;
  };
  const auto p = softmax<double>(z);
  const auto g = softmax_backward<double>(p, w);
  for (std::size_t i = 0; i < z.size(); ++i) {
    auto zp = z, zm = z;
    zp[i] += 1e-6;
    zm[i] -= 1e-6;
    EXPECT_NEAR(g[i], (f(zp) - f(zm)) / 2e-6, 1e-8);
  }
}
