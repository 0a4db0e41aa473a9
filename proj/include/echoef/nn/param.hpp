#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "echoef/tensor.hpp"

namespace echoef {

using Rng = std::mt19937_64;

/// A learnable tensor and its accumulated gradient.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Param() = default;
  Param(std::string n, Shape shape) : name(std::move(n)), value(shape), grad(shape) {}

  void zero_grad() { grad.fill(T{0}); }
};

template <typename T>
using ParamRefs = std::vector<Param<T>*>;

template <typename T>
void uniform_init(Tensor<T>& t, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
}

/// Fan-in uniform bounds: He-style for layers feeding a ReLU, 1/sqrt(fan_in) otherwise.
enum class InitKind { Relu, Linear };

inline double fan_in_bound(std::size_t fan_in, InitKind kind) {
  const double f = static_cast<double>(fan_in);
  return kind == InitKind::Relu ? std::sqrt(6.0 / f) : 1.0 / std::sqrt(f);
}

template <typename T>
std::size_t count_scalars(const ParamRefs<T>& refs) {
  std::size_t n = 0;
  for (const auto* p : refs) n += p->value.size();
  return n;
}

template <typename T>
void zero_grads(const ParamRefs<T>& refs) {
  for (auto* p : refs) p->zero_grad();
}

}  // namespace echoef
