#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "echoef/nn/ops.hpp"

namespace echoef::loss {

struct LossBundle {
  double l_cls = 0, l_reg = 0, l_ef = 0, l_seg = 0, l_aux = 0, total = 0;
  double beta = 0.01;
};

/// Pseudo-label quality: alpha = (dsc_ed + dsc_es) / 2.
struct QualityWeight {
  double alpha = 0;
  double dsc_ed = 0;
  double dsc_es = 0;

  static QualityWeight from_dice(double ed, double es) {
    if (!(ed >= 0 && ed <= 1 && es >= 0 && es <= 1)) throw InvalidInput("dice must lie in [0, 1]");
    return {(ed + es) / 2.0, ed, es};
  }
};

/// -log p_u; overload on probabilities.
inline double cls_loss_from_probs(std::span<const double> p, std::size_t u) {
  if (u >= p.size()) throw InvalidInput("class index out of range");
  return -std::log(p[u]);
}

/// -log softmax(logits)_u via log-sum-exp. Optional gradient w.r.t. logits.
template <typename T>
T cls_loss(std::span<const T> logits, std::size_t u, std::vector<T>* g_logits = nullptr) {
  if (u >= logits.size()) throw InvalidInput("class index out of range");
  const T lse = log_sum_exp(logits);
  if (g_logits) {
    g_logits->assign(logits.size(), T{0});
    for (std::size_t m = 0; m < logits.size(); ++m) (*g_logits)[m] = std::exp(logits[m] - lse);
    (*g_logits)[u] -= T{1};
  }
  return lse - logits[u];
}

template <typename T>
T smooth_l1(T x) {
  const T a = std::abs(x);
  return a < T{1} ? T{0.5} * x * x : a - T{0.5};
}

template <typename T>
T smooth_l1_grad(T x) {
  if (x >= T{1}) return T{1};
  if (x <= T{-1}) return T{-1};
  return x;
}

/// sum_m p_m * SmoothL1(o_m - v_m). Gradients w.r.t. o and p on request.
template <typename T>
T reg_loss(std::span<const T> o, std::span<const double> v, std::span<const T> p, std::vector<T>* g_o = nullptr,
           std::vector<T>* g_p = nullptr) {
  if (o.size() != v.size() || o.size() != p.size()) throw InvalidInput("reg_loss: length mismatch");
  T total = 0;
  if (g_o) g_o->assign(o.size(), T{0});
  if (g_p) g_p->assign(o.size(), T{0});
  for (std::size_t m = 0; m < o.size(); ++m) {
    const T d = o[m] - static_cast<T>(v[m]);
    const T s = smooth_l1(d);
    total += p[m] * s;
    if (g_o) (*g_o)[m] = p[m] * smooth_l1_grad(d);
    if (g_p) (*g_p)[m] = s;
  }
  return total;
}

/// Dice coefficient of two binary masks; two empty masks agree perfectly.
inline double dsc(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  if (a.size() != b.size()) throw InvalidInput("dsc: mask size mismatch");
  std::size_t inter = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] != 0, y = b[i] != 0;
    na += x;
    nb += y;
    inter += x && y;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

enum class PixelReduction { Sum, Mean };

/// Per-pixel binary cross-entropy from logits, summed (or averaged) over the grid.
template <typename T>
T bce_with_logits(std::span<const T> logits, std::span<const std::uint8_t> target, PixelReduction reduction,
                  std::vector<T>* g_logits = nullptr) {
  if (logits.size() != target.size()) throw InvalidInput("bce: size mismatch");
  const T scale = reduction == PixelReduction::Mean ? T{1} / static_cast<T>(logits.size()) : T{1};
  T total = 0;
  if (g_logits) g_logits->assign(logits.size(), T{0});
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const T x = logits[i];
    const T y = target[i] ? T{1} : T{0};
    // max(x,0) - x*y + log(1 + exp(-|x|))
    total += std::max(x, T{0}) - x * y + std::log1p(std::exp(-std::abs(x)));
    if (g_logits) (*g_logits)[i] = (sigmoid(x) - y) * scale;
  }
  return total * scale;
}

template <typename T>
struct AuxResult {
  T l_seg = 0;
  T l_aux = 0;
  std::vector<T> g_ed, g_es;  // dL_aux / dlogits
};

/// L_aux = alpha * 0.5 * (BCE(ed) + BCE(es)).
template <typename T>
AuxResult<T> aux_loss(std::span<const T> ed_logits, std::span<const T> es_logits, std::span<const std::uint8_t> pseudo_ed,
                      std::span<const std::uint8_t> pseudo_es, double alpha,
                      PixelReduction reduction = PixelReduction::Sum, bool want_grad = false) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidInput("aux_loss: alpha outside [0,1]");
  if (ed_logits.size() != pseudo_ed.size() || es_logits.size() != pseudo_es.size()) {
    throw InvalidInput("aux_loss: prediction and pseudo-label shapes differ");
  }
  AuxResult<T> r;
  const T bce_ed = bce_with_logits(ed_logits, pseudo_ed, reduction, want_grad ? &r.g_ed : nullptr);
  const T bce_es = bce_with_logits(es_logits, pseudo_es, reduction, want_grad ? &r.g_es : nullptr);
  r.l_seg = T{0.5} * (bce_ed + bce_es);
  const T a = static_cast<T>(alpha);
  r.l_aux = a * r.l_seg;
  if (want_grad) {
    for (auto& g : r.g_ed) g *= T{0.5} * a;
    for (auto& g : r.g_es) g *= T{0.5} * a;
  }
  return r;
}

inline double total_loss(double l_ef, double l_aux, double beta) {
  if (beta < 0) throw InvalidInput("beta must be non-negative");
  return l_ef + beta * l_aux;
}

}  // namespace echoef::loss
