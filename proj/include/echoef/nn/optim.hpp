#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "echoef/nn/param.hpp"

namespace echoef {

struct OptimizerConfig {
  std::string kind = "sgd";  // sgd | adam
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double grad_clip = 0.0;    // global L2 norm cap; 0 disables
  std::size_t step_epochs = 0;  // step decay period; 0 disables
  double gamma = 0.1;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  double lr_at(std::size_t epoch) const {
    if (step_epochs == 0) return lr;
    return lr * std::pow(gamma, static_cast<double>(epoch / step_epochs));
  }
};

/// SGD with momentum or Adam over a fixed parameter list. Gradients are
/// divided by `batch` before the update.
template <typename T>
class Optimizer {
 public:
  Optimizer(OptimizerConfig cfg, const ParamRefs<T>& params) : cfg_(std::move(cfg)), params_(params) {
    if (cfg_.kind != "sgd" && cfg_.kind != "adam") throw InvalidConfig("unknown optimizer '" + cfg_.kind + "'");
    for (const auto* p : params_) {
      first_.emplace_back(p->value.shape());
      if (cfg_.kind == "adam") second_.emplace_back(p->value.shape());
    }
  }

  const OptimizerConfig& config() const { return cfg_; }

  double grad_norm(double batch) const {
    double s = 0;
    for (const auto* p : params_)
      for (T g : p->grad.values()) s += static_cast<double>(g) * static_cast<double>(g);
    return std::sqrt(s) / batch;
  }

  void step(double lr, double batch) {
    double scale = 1.0 / batch;
    if (cfg_.grad_clip > 0) {
      const double norm = grad_norm(batch);
      if (norm > cfg_.grad_clip) scale *= cfg_.grad_clip / norm;
    }
    ++steps_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& value = params_[i]->value;
      const auto& grad = params_[i]->grad;
      auto& m = first_[i];
      if (cfg_.kind == "sgd") {
        for (std::size_t k = 0; k < value.size(); ++k) {
          const double g = static_cast<double>(grad[k]) * scale + cfg_.weight_decay * static_cast<double>(value[k]);
          m[k] = static_cast<T>(cfg_.momentum * static_cast<double>(m[k]) + g);
          value[k] -= static_cast<T>(lr * static_cast<double>(m[k]));
        }
      } else {
        auto& v = second_[i];
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
        for (std::size_t k = 0; k < value.size(); ++k) {
          const double g = static_cast<double>(grad[k]) * scale + cfg_.weight_decay * static_cast<double>(value[k]);
          m[k] = static_cast<T>(cfg_.beta1 * static_cast<double>(m[k]) + (1 - cfg_.beta1) * g);
          v[k] = static_cast<T>(cfg_.beta2 * static_cast<double>(v[k]) + (1 - cfg_.beta2) * g * g);
          const double mh = static_cast<double>(m[k]) / c1, vh = static_cast<double>(v[k]) / c2;
          value[k] -= static_cast<T>(lr * mh / (std::sqrt(vh) + cfg_.eps));
        }
      }
    }
  }

 private:
  OptimizerConfig cfg_;
  ParamRefs<T> params_;
  std::vector<Tensor<T>> first_, second_;
  std::size_t steps_ = 0;
};

}  // namespace echoef
