// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <map>

#include "gaussworld/core/nn.hpp"

namespace gw::nn {

/// Decoupled-weight-decay Adam. Moments are keyed by parameter name so the
/// optimizer state can be checkpointed next to the parameters.
template <class T>
class AdamW {
 public:
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
  T weight_decay = T(1e-4);

  void step(ParamStore<T>& ps, T lr) {
    ++t_;
    const T bc1 = T(1) - static_cast<T>(std::pow(double(beta1), double(t_)));
    const T bc2 = T(1) - static_cast<T>(std::pow(double(beta2), double(t_)));
    for (auto& [name, p] : ps.params()) {
      if (!p->grad_ready) continue;
      Tensor<T>& m = state(m_, name, p->value.shape());
      Tensor<T>& v = state(v_, name, p->value.shape());
      Tensor<T>& w = p->value;
      const Tensor<T>& g = p->grad;
      const i64 n = w.numel();
      for (i64 i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
        v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];
        const T mh = m[i] / bc1;
        const T vh = v[i] / bc2;
        w[i] -= lr * (mh / (std::sqrt(vh) + eps) + weight_decay * w[i]);
      }
    }
  }

  i64 steps_taken() const { return t_; }
  void set_steps_taken(i64 t) { t_ = t; }
  std::map<std::string, Tensor<T>>& moments1() { return m_; }
  std::map<std::string, Tensor<T>>& moments2() { return v_; }

 private:
  Tensor<T>& state(std::map<std::string, Tensor<T>>& store,
                   const std::string& name, const Shape& shape) {
    auto it = store.find(name);
    if (it == store.end()) it = store.emplace(name, Tensor<T>::zeros(shape)).first;
    return it->second;
  }

  std::map<std::string, Tensor<T>> m_, v_;
  i64 t_ = 0;
};

/// Cosine decay from lr0 to lr_min over total steps.
inline double cosine_lr(double lr0, double lr_min, i64 step, i64 total) {
  if (total <= 0 || step >= total) return lr_min;
  const double c = 0.5 * (1.0 + std::cos(3.14159265358979323846 * double(step) / double(total)));
  return lr_min + (lr0 - lr_min) * c;
}

}  // namespace gw::nn
