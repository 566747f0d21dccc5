// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gaussworld/core/blas.hpp"
#include "gaussworld/core/tensor.hpp"

namespace gw::ad {

// Reverse-mode autodiff over dense tensors. The graph is dynamic: every op
// returns a shared node holding its value and a closure that scatters the
// node's gradient into its inputs. backward() runs a reverse topological
// sweep from a scalar root. Templated on the scalar so the same model code
// runs in float for training and double for finite-difference checks.

template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  bool grad_ready = false;
  std::vector<std::shared_ptr<Node<T>>> inputs;
  std::function<void(Node<T>&)> backprop;
};

template <class T>
using Var = std::shared_ptr<Node<T>>;

template <class T>
Tensor<T>& grad_of(Node<T>& n) {
  if (!n.grad_ready) {
    n.grad = Tensor<T>::zeros(n.value.shape());
    n.grad_ready = true;
  }
  return n.grad;
}

template <class T>
Tensor<T>& grad_of(const Var<T>& v) {
  return grad_of(*v);
}

template <class T>
Var<T> constant(Tensor<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  return n;
}

template <class T>
Var<T> leaf(Tensor<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = true;
  return n;
}

template <class T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> inputs,
               std::function<void(Node<T>&)> back) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->inputs = std::move(inputs);
  for (const auto& i : n->inputs) n->requires_grad |= i->requires_grad;
  if (n->requires_grad) n->backprop = std::move(back);
  return n;
}

template <class T>
void clear_grad(const Var<T>& v) {
  v->grad = Tensor<T>();
  v->grad_ready = false;
}

template <class T>
void backward(const Var<T>& root) {
  GW_REQUIRE(root->value.numel() == 1, "backward root must be scalar");
  // Iterative DFS topo order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, size_t>> stack;
  stack.push_back({root.get(), 0});
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->inputs.size()) {
      Node<T>* child = node->inputs[idx++].get();
      if (child->requires_grad && !seen.count(child)) {
        seen.insert(child);
        stack.push_back({child, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  grad_of(*root)[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backprop && n->grad_ready) n->backprop(*n);
  }
}

// ---------------------------------------------------------------------------
// Broadcasting helpers
// ---------------------------------------------------------------------------

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  const size_t nd = std::max(a.size(), b.size());
  Shape out(nd);
  for (size_t i = 0; i < nd; ++i) {
    const i64 da = i < nd - a.size() ? 1 : a[i - (nd - a.size())];
    const i64 db = i < nd - b.size() ? 1 : b[i - (nd - b.size())];
    GW_REQUIRE(da == db || da == 1 || db == 1,
               "broadcast mismatch " + shape_str(a) + " vs " + shape_str(b));
    out[i] = std::max(da, db);
  }
  return out;
}

// Strides of `s` right-aligned into an nd-dim frame, zero where broadcast.
inline Shape broadcast_strides(const Shape& s, size_t nd) {
  Shape st(nd, 0);
  i64 acc = 1;
  for (i64 i = static_cast<i64>(s.size()) - 1; i >= 0; --i) {
    const size_t o = nd - s.size() + i;
    st[o] = (s[i] == 1) ? 0 : acc;
    acc *= s[i];
  }
  return st;
}

template <class T, class F>
void broadcast_iterate(const Shape& out_shape, const Shape& sa, const Shape& sb,
                       F&& fn) {
  const size_t nd = out_shape.size();
  const Shape sta = broadcast_strides(sa, nd);
  const Shape stb = broadcast_strides(sb, nd);
  const i64 n = shape_numel(out_shape);
  std::vector<i64> idx(nd, 0);
  i64 ia = 0, ib = 0;
  for (i64 lin = 0; lin < n; ++lin) {
    fn(lin, ia, ib);
    for (i64 d = static_cast<i64>(nd) - 1; d >= 0; --d) {
      idx[d]++;
      ia += sta[d];
      ib += stb[d];
      if (idx[d] < out_shape[d]) break;
      ia -= sta[d] * out_shape[d];
      ib -= stb[d] * out_shape[d];
      idx[d] = 0;
    }
  }
}

// Reduce `g` (shaped like the broadcast output) back onto `shape`.
template <class T>
Tensor<T> reduce_to_shape(const Tensor<T>& g, const Shape& shape) {
  if (g.shape() == shape) return g;
  Tensor<T> out = Tensor<T>::zeros(shape);
  broadcast_iterate<T>(g.shape(), shape, shape,
                       [&](i64 lin, i64 ia, i64) { out[ia] += g[lin]; });
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise binary ops (broadcasting)
// ---------------------------------------------------------------------------

namespace detail {

template <class T, class FwdFn, class BackFn>
Var<T> binary_op(const Var<T>& a, const Var<T>& b, FwdFn fwd, BackFn back) {
  const Shape os = broadcast_shape(a->value.shape(), b->value.shape());
  Tensor<T> out(os);
  if (a->value.shape() == b->value.shape()) {
    const T* pa = a->value.data();
    const T* pb = b->value.data();
    T* po = out.data();
    const i64 n = out.numel();
    for (i64 i = 0; i < n; ++i) po[i] = fwd(pa[i], pb[i]);
  } else {
    broadcast_iterate<T>(os, a->value.shape(), b->value.shape(),
                         [&](i64 lin, i64 ia, i64 ib) {
                           out[lin] = fwd(a->value[ia], b->value[ib]);
                         });
  }
  return make_op<T>(std::move(out), {a, b}, [back](Node<T>& self) {
    const auto& a = self.inputs[0];
    const auto& b = self.inputs[1];
    const bool na = a->requires_grad, nb = b->requires_grad;
    Tensor<T>* ga = na ? &grad_of(a) : nullptr;
    Tensor<T>* gb = nb ? &grad_of(b) : nullptr;
    if (a->value.shape() == b->value.shape()) {
      const i64 n = self.grad.numel();
      for (i64 i = 0; i < n; ++i) {
        T da, db;
        back(self.grad[i], a->value[i], b->value[i], da, db);
        if (na) (*ga)[i] += da;
        if (nb) (*gb)[i] += db;
      }
    } else {
      broadcast_iterate<T>(self.value.shape(), a->value.shape(),
                           b->value.shape(), [&](i64 lin, i64 ia, i64 ib) {
                             T da, db;
                             back(self.grad[lin], a->value[ia], b->value[ib],
                                  da, db);
                             if (na) (*ga)[ia] += da;
                             if (nb) (*gb)[ib] += db;
                           });
    }
  });
}

}  // namespace detail

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return detail::binary_op<T>(
      a, b, [](T x, T y) { return x + y; },
      [](T g, T, T, T& da, T& db) {
        da = g;
        db = g;
      });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return detail::binary_op<T>(
      a, b, [](T x, T y) { return x - y; },
      [](T g, T, T, T& da, T& db) {
        da = g;
        db = -g;
      });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return detail::binary_op<T>(
      a, b, [](T x, T y) { return x * y; },
      [](T g, T x, T y, T& da, T& db) {
        da = g * y;
        db = g * x;
      });
}

template <class T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  return detail::binary_op<T>(
      a, b, [](T x, T y) { return x / y; },
      [](T g, T x, T y, T& da, T& db) {
        da = g / y;
        db = -g * x / (y * y);
      });
}

// ---------------------------------------------------------------------------
// Elementwise unary ops
// ---------------------------------------------------------------------------

namespace detail {

template <class T, class FwdFn, class BackFn>
Var<T> unary_op(const Var<T>& a, FwdFn fwd, BackFn back) {
  Tensor<T> out(a->value.shape());
  const i64 n = out.numel();
  for (i64 i = 0; i < n; ++i) out[i] = fwd(a->value[i]);
  return make_op<T>(std::move(out), {a}, [back](Node<T>& self) {
    auto& g = grad_of(self.inputs[0]);
    const i64 n = self.grad.numel();
    for (i64 i = 0; i < n; ++i)
      g[i] += back(self.grad[i], self.inputs[0]->value[i], self.value[i]);
  });
}

template <class T>
T sigmoid_scalar(T x) {
  if (x >= T(0)) {
    const T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace detail

template <class T>
Var<T> neg(const Var<T>& a) {
  return detail::unary_op<T>(
      a, [](T x) { return -x; }, [](T g, T, T) { return -g; });
}

template <class T>
Var<T> sigmoid(const Var<T>& a) {
  return detail::unary_op<T>(
      a, [](T x) { return detail::sigmoid_scalar(x); },
      [](T g, T, T y) { return g * y * (T(1) - y); });
}

template <class T>
Var<T> tanh_(const Var<T>& a) {
  return detail::unary_op<T>(
      a, [](T x) { return std::tanh(x); },
      [](T g, T, T y) { return g * (T(1) - y * y); });
}

template <class T>
Var<T> exp_(const Var<T>& a) {
  return detail::unary_op<T>(
      a, [](T x) { return std::exp(x); }, [](T g, T, T y) { return g * y; });
}

template <class T>
Var<T> log_(const Var<T>& a) {
  return detail::unary_op<T>(
      a, [](T x) { return std::log(x); }, [](T g, T x, T) { return g / x; });
}

template <class T>
Var<T> abs_(const Var<T>& a) {
  return detail::unary_op<T>(
      a, [](T x) { return std::abs(x); },
      [](T g, T x, T) { return x >= T(0) ? g : -g; });
}

template <class T>
Var<T> square(const Var<T>& a) {
  return detail::unary_op<T>(
      a, [](T x) { return x * x; }, [](T g, T x, T) { return g * T(2) * x; });
}

template <class T>
Var<T> silu(const Var<T>& a) {
  return detail::unary_op<T>(
      a, [](T x) { return x * detail::sigmoid_scalar(x); },
      [](T g, T x, T) {
        const T s = detail::sigmoid_scalar(x);
        return g * (s + x * s * (T(1) - s));
      });
}

template <class T>
Var<T> gelu(const Var<T>& a) {
  // tanh approximation
  constexpr double k0 = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double k1 = 0.044715;
  return detail::unary_op<T>(
      a,
      [](T x) {
        const T u = T(k0) * (x + T(k1) * x * x * x);
        return T(0.5) * x * (T(1) + std::tanh(u));
      },
      [](T g, T x, T) {
        const T u = T(k0) * (x + T(k1) * x * x * x);
        const T th = std::tanh(u);
        const T du = T(k0) * (T(1) + T(3) * T(k1) * x * x);
        return g * (T(0.5) * (T(1) + th) +
                    T(0.5) * x * (T(1) - th * th) * du);
      });
}

template <class T>
Var<T> clamp(const Var<T>& a, T lo, T hi) {
  return detail::unary_op<T>(
      a, [lo, hi](T x) { return std::min(hi, std::max(lo, x)); },
      [lo, hi](T g, T x, T) { return (x >= lo && x <= hi) ? g : T(0); });
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
  return detail::unary_op<T>(
      a, [s](T x) { return s * x; }, [s](T g, T, T) { return g * s; });
}

template <class T>
Var<T> add_scalar(const Var<T>& a, T c) {
  return detail::unary_op<T>(
      a, [c](T x) { return x + c; }, [](T g, T, T) { return g; });
}

template <class T>
Var<T> stopgrad(const Var<T>& a) {
  return constant(a->value);
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <class T>
Var<T> reshape(const Var<T>& a, Shape s) {
  Tensor<T> out = a->value.reshaped(std::move(s));
  return make_op<T>(std::move(out), {a}, [](Node<T>& self) {
    auto& g = grad_of(self.inputs[0]);
    const i64 n = self.grad.numel();
    for (i64 i = 0; i < n; ++i) g[i] += self.grad[i];
  });
}

namespace detail {

template <class T>
Tensor<T> permute_tensor(const Tensor<T>& x, const std::vector<i64>& axes) {
  const size_t nd = x.ndim();
  GW_REQUIRE(axes.size() == nd, "permute rank mismatch");
  Shape os(nd);
  for (size_t i = 0; i < nd; ++i) os[i] = x.shape()[axes[i]];
  Tensor<T> out(os);
  const Shape xst = x.strides();
  Shape map(nd);
  for (size_t i = 0; i < nd; ++i) map[i] = xst[axes[i]];
  std::vector<i64> idx(nd, 0);
  i64 src = 0;
  const i64 n = out.numel();
  for (i64 lin = 0; lin < n; ++lin) {
    out[lin] = x[src];
    for (i64 d = static_cast<i64>(nd) - 1; d >= 0; --d) {
      idx[d]++;
      src += map[d];
      if (idx[d] < os[d]) break;
      src -= map[d] * os[d];
      idx[d] = 0;
    }
  }
  return out;
}

}  // namespace detail

template <class T>
Var<T> permute(const Var<T>& a, std::vector<i64> axes) {
  Tensor<T> out = detail::permute_tensor(a->value, axes);
  return make_op<T>(std::move(out), {a}, [axes](Node<T>& self) {
    std::vector<i64> inv(axes.size());
    for (size_t i = 0; i < axes.size(); ++i) inv[axes[i]] = static_cast<i64>(i);
    Tensor<T> gin = detail::permute_tensor(self.grad, inv);
    auto& g = grad_of(self.inputs[0]);
    for (i64 i = 0; i < gin.numel(); ++i) g[i] += gin[i];
  });
}

/// Slice along an axis: out = a[..., start:start+len, ...].
template <class T>
Var<T> slice(const Var<T>& a, i64 axis, i64 start, i64 len) {
  const Shape& is = a->value.shape();
  GW_REQUIRE(axis >= 0 && axis < static_cast<i64>(is.size()), "slice axis");
  GW_REQUIRE(start >= 0 && start + len <= is[axis], "slice bounds");
  Shape os = is;
  os[axis] = len;
  i64 outer = 1, inner = 1;
  for (i64 d = 0; d < axis; ++d) outer *= is[d];
  for (i64 d = axis + 1; d < static_cast<i64>(is.size()); ++d) inner *= is[d];
  Tensor<T> out(os);
  for (i64 o = 0; o < outer; ++o)
    for (i64 j = 0; j < len; ++j)
      std::copy_n(a->value.data() + (o * is[axis] + start + j) * inner, inner,
                  out.data() + (o * len + j) * inner);
  return make_op<T>(std::move(out), {a},
                    [axis, start, len, outer, inner](Node<T>& self) {
                      auto& g = grad_of(self.inputs[0]);
                      const i64 da = g.shape()[axis];
                      for (i64 o = 0; o < outer; ++o)
                        for (i64 j = 0; j < len; ++j) {
                          const T* src = self.grad.data() + (o * len + j) * inner;
                          T* dst = g.data() + (o * da + start + j) * inner;
                          for (i64 i = 0; i < inner; ++i) dst[i] += src[i];
                        }
                    });
}

template <class T>
Var<T> concat(const std::vector<Var<T>>& xs, i64 axis) {
  GW_REQUIRE(!xs.empty(), "concat needs inputs");
  const Shape& s0 = xs[0]->value.shape();
  Shape os = s0;
  i64 total = 0;
  for (const auto& x : xs) {
    GW_REQUIRE(x->value.ndim() == s0.size(), "concat rank mismatch");
    total += x->value.shape()[axis];
  }
  os[axis] = total;
  i64 outer = 1, inner = 1;
  for (i64 d = 0; d < axis; ++d) outer *= s0[d];
  for (i64 d = axis + 1; d < static_cast<i64>(s0.size()); ++d) inner *= s0[d];
  Tensor<T> out(os);
  i64 off = 0;
  for (const auto& x : xs) {
    const i64 la = x->value.shape()[axis];
    for (i64 o = 0; o < outer; ++o)
      std::copy_n(x->value.data() + o * la * inner, la * inner,
                  out.data() + (o * total + off) * inner);
    off += la;
  }
  return make_op<T>(std::move(out), xs, [axis, outer, inner, total](Node<T>& self) {
    i64 off = 0;
    for (auto& x : self.inputs) {
      const i64 la = x->value.shape()[axis];
      if (x->requires_grad) {
        auto& g = grad_of(x);
        for (i64 o = 0; o < outer; ++o) {
          const T* src = self.grad.data() + (o * total + off) * inner;
          T* dst = g.data() + o * la * inner;
          for (i64 i = 0; i < la * inner; ++i) dst[i] += src[i];
        }
      }
      off += la;
    }
  });
}

/// Gather along dim 0: out[i, ...] = a[idx[i], ...].
template <class T>
Var<T> take_dim0(const Var<T>& a, std::vector<i64> idx) {
  const Shape& is = a->value.shape();
  i64 inner = 1;
  for (size_t d = 1; d < is.size(); ++d) inner *= is[d];
  Shape os = is;
  os[0] = static_cast<i64>(idx.size());
  Tensor<T> out(os);
  for (size_t i = 0; i < idx.size(); ++i) {
    GW_REQUIRE(idx[i] >= 0 && idx[i] < is[0], "take_dim0 index out of range");
    std::copy_n(a->value.data() + idx[i] * inner, inner,
                out.data() + static_cast<i64>(i) * inner);
  }
  return make_op<T>(std::move(out), {a}, [idx, inner](Node<T>& self) {
    auto& g = grad_of(self.inputs[0]);
    for (size_t i = 0; i < idx.size(); ++i) {
      const T* src = self.grad.data() + static_cast<i64>(i) * inner;
      T* dst = g.data() + idx[i] * inner;
      for (i64 j = 0; j < inner; ++j) dst[j] += src[j];
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions and losses
// ---------------------------------------------------------------------------

template <class T>
Var<T> sum_all(const Var<T>& a) {
  T acc = T(0);
  for (i64 i = 0; i < a->value.numel(); ++i) acc += a->value[i];
  return make_op<T>(Tensor<T>::scalar(acc), {a}, [](Node<T>& self) {
    auto& g = grad_of(self.inputs[0]);
    const T gv = self.grad[0];
    for (i64 i = 0; i < g.numel(); ++i) g[i] += gv;
  });
}

template <class T>
Var<T> mean_all(const Var<T>& a) {
  const i64 n = a->value.numel();
  return scale(sum_all(a), T(1) / static_cast<T>(n));
}

/// Mean squared error between two same-shaped tensors (scalar output).
template <class T>
Var<T> mse(const Var<T>& a, const Var<T>& b) {
  GW_REQUIRE(a->value.shape() == b->value.shape(), "mse shape mismatch");
  const i64 n = a->value.numel();
  T acc = T(0);
  for (i64 i = 0; i < n; ++i) {
    const T d = a->value[i] - b->value[i];
    acc += d * d;
  }
  acc /= static_cast<T>(n);
  return make_op<T>(Tensor<T>::scalar(acc), {a, b}, [n](Node<T>& self) {
    const auto& a = self.inputs[0];
    const auto& b = self.inputs[1];
    const T c = self.grad[0] * T(2) / static_cast<T>(n);
    if (a->requires_grad) {
      auto& g = grad_of(a);
      for (i64 i = 0; i < n; ++i) g[i] += c * (a->value[i] - b->value[i]);
    }
    if (b->requires_grad) {
      auto& g = grad_of(b);
      for (i64 i = 0; i < n; ++i) g[i] -= c * (a->value[i] - b->value[i]);
    }
  });
}

// ---------------------------------------------------------------------------
// Matrix ops
// ---------------------------------------------------------------------------

/// 2-D matmul: out = op(a) * op(b).
template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool ta = false,
              bool tb = false) {
  GW_REQUIRE(a->value.ndim() == 2 && b->value.ndim() == 2, "matmul needs 2-D");
  const i64 m = ta ? a->value.dim(1) : a->value.dim(0);
  const i64 k = ta ? a->value.dim(0) : a->value.dim(1);
  const i64 kb = tb ? b->value.dim(1) : b->value.dim(0);
  const i64 n = tb ? b->value.dim(0) : b->value.dim(1);
  GW_REQUIRE(k == kb, "matmul inner dim mismatch");
  Tensor<T> out(Shape{m, n});
  matmul_raw<T>(ta, tb, m, n, k, a->value.data(), b->value.data(), out.data());
  return make_op<T>(std::move(out), {a, b}, [ta, tb, m, n, k](Node<T>& self) {
    const auto& a = self.inputs[0];
    const auto& b = self.inputs[1];
    const T* g = self.grad.data();
    if (a->requires_grad) {
      auto& ga = grad_of(a);
      if (!ta)  // dA[m,k] = G * op(B)^T
        matmul_raw<T>(false, !tb, m, k, n, g, b->value.data(), ga.data(), T(1));
      else  // dA_stored[k,m] = op(B) * G^T
        matmul_raw<T>(tb, true, k, m, n, b->value.data(), g, ga.data(), T(1));
    }
    if (b->requires_grad) {
      auto& gb = grad_of(b);
      if (!tb)  // dB[k,n] = op(A)^T * G
        matmul_raw<T>(!ta, false, k, n, m, a->value.data(), g, gb.data(), T(1));
      else  // dB_stored[n,k] = G^T * op(A)
        matmul_raw<T>(true, ta, n, k, m, g, a->value.data(), gb.data(), T(1));
    }
  });
}

/// Batched matmul over leading dim: [B,M,K] x [B,K,N] -> [B,M,N].
template <class T>
Var<T> bmm(const Var<T>& a, const Var<T>& b, bool ta = false, bool tb = false) {
  GW_REQUIRE(a->value.ndim() == 3 && b->value.ndim() == 3, "bmm needs 3-D");
  const i64 bb = a->value.dim(0);
  GW_REQUIRE(b->value.dim(0) == bb, "bmm batch mismatch");
  const i64 m = ta ? a->value.dim(2) : a->value.dim(1);
  const i64 k = ta ? a->value.dim(1) : a->value.dim(2);
  const i64 n = tb ? b->value.dim(1) : b->value.dim(2);
  const i64 kb = tb ? b->value.dim(2) : b->value.dim(1);
  GW_REQUIRE(k == kb, "bmm inner dim mismatch");
  Tensor<T> out(Shape{bb, m, n});
  const i64 as = a->value.dim(1) * a->value.dim(2);
  const i64 bs = b->value.dim(1) * b->value.dim(2);
  init_threading();
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < bb; ++i) {
    const i64 lda = ta ? m : k;
    const i64 ldb = tb ? k : n;
    gemm<T>(ta, tb, m, n, k, T(1), a->value.data() + i * as, lda,
            b->value.data() + i * bs, ldb, T(0), out.data() + i * m * n, n);
  }
  return make_op<T>(
      std::move(out), {a, b}, [ta, tb, bb, m, n, k, as, bs](Node<T>& self) {
        const auto& a = self.inputs[0];
        const auto& b = self.inputs[1];
        if (a->requires_grad) {
          auto& ga = grad_of(a);
#pragma omp parallel for schedule(static)
          for (i64 i = 0; i < bb; ++i) {
            const T* g = self.grad.data() + i * m * n;
            const T* pb = b->value.data() + i * bs;
            T* pga = ga.data() + i * as;
            if (!ta)
              gemm<T>(false, !tb, m, k, n, T(1), g, n, pb, tb ? k : n, T(1),
                      pga, k);
            else
              gemm<T>(tb, true, k, m, n, T(1), pb, tb ? k : n, g, n, T(1), pga,
                      m);
          }
        }
        if (b->requires_grad) {
          auto& gb = grad_of(b);
#pragma omp parallel for schedule(static)
          for (i64 i = 0; i < bb; ++i) {
            const T* g = self.grad.data() + i * m * n;
            const T* pa = a->value.data() + i * as;
            T* pgb = gb.data() + i * bs;
            if (!tb)
              gemm<T>(!ta, false, k, n, m, T(1), pa, ta ? m : k, g, n, T(1),
                      pgb, n);
            else
              gemm<T>(true, ta, n, k, m, T(1), g, n, pa, ta ? m : k, T(1), pgb,
                      k);
          }
        }
      });
}

/// Fused affine layer: x[M,K] * w[N,K]^T + b[N] -> [M,N].
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  GW_REQUIRE(x->value.ndim() == 2, "linear input must be 2-D");
  const i64 m = x->value.dim(0), k = x->value.dim(1);
  const i64 n = w->value.dim(0);
  GW_REQUIRE(w->value.dim(1) == k, "linear weight shape");
  GW_REQUIRE(b->value.numel() == n, "linear bias shape");
  Tensor<T> out(Shape{m, n});
  for (i64 i = 0; i < m; ++i)
    std::copy_n(b->value.data(), n, out.data() + i * n);
  gemm<T>(false, true, m, n, k, T(1), x->value.data(), k, w->value.data(), k,
          T(1), out.data(), n);
  return make_op<T>(std::move(out), {x, w, b}, [m, n, k](Node<T>& self) {
    const auto& x = self.inputs[0];
    const auto& w = self.inputs[1];
    const auto& b = self.inputs[2];
    const T* g = self.grad.data();
    if (x->requires_grad)
      gemm<T>(false, false, m, k, n, T(1), g, n, w->value.data(), k, T(1),
              grad_of(x).data(), k);
    if (w->requires_grad)
      gemm<T>(true, false, n, k, m, T(1), g, n, x->value.data(), k, T(1),
              grad_of(w).data(), k);
    if (b->requires_grad) {
      auto& gb = grad_of(b);
      for (i64 i = 0; i < m; ++i)
        for (i64 j = 0; j < n; ++j) gb[j] += g[i * n + j];
    }
  });
}

// ---------------------------------------------------------------------------
// Softmax / normalization
// ---------------------------------------------------------------------------

/// Softmax over the last dimension.
template <class T>
Var<T> softmax_lastdim(const Var<T>& a) {
  const Shape& s = a->value.shape();
  const i64 d = s.back();
  const i64 rows = a->value.numel() / d;
  Tensor<T> out(s);
  init_threading();
#pragma omp parallel for schedule(static)
  for (i64 r = 0; r < rows; ++r) {
    const T* x = a->value.data() + r * d;
    T* y = out.data() + r * d;
    T mx = x[0];
    for (i64 i = 1; i < d; ++i) mx = std::max(mx, x[i]);
    T sum = T(0);
    for (i64 i = 0; i < d; ++i) {
      y[i] = std::exp(x[i] - mx);
      sum += y[i];
    }
    const T inv = T(1) / sum;
    for (i64 i = 0; i < d; ++i) y[i] *= inv;
  }
  return make_op<T>(std::move(out), {a}, [d, rows](Node<T>& self) {
    auto& g = grad_of(self.inputs[0]);
#pragma omp parallel for schedule(static)
    for (i64 r = 0; r < rows; ++r) {
      const T* y = self.value.data() + r * d;
      const T* go = self.grad.data() + r * d;
      T* gi = g.data() + r * d;
      T dot = T(0);
      for (i64 i = 0; i < d; ++i) dot += go[i] * y[i];
      for (i64 i = 0; i < d; ++i) gi[i] += y[i] * (go[i] - dot);
    }
  });
}

/// LayerNorm over the last dimension with affine parameters gamma/beta [D].
template <class T>
Var<T> layernorm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                 T eps = T(1e-5)) {
  const Shape& s = x->value.shape();
  const i64 d = s.back();
  const i64 rows = x->value.numel() / d;
  GW_REQUIRE(gamma->value.numel() == d && beta->value.numel() == d,
             "layernorm affine shape");
  Tensor<T> out(s);
  auto stats = std::make_shared<Tensor<T>>(Shape{rows, 2});
#pragma omp parallel for schedule(static)
  for (i64 r = 0; r < rows; ++r) {
    const T* px = x->value.data() + r * d;
    T mean = T(0);
    for (i64 i = 0; i < d; ++i) mean += px[i];
    mean /= static_cast<T>(d);
    T var = T(0);
    for (i64 i = 0; i < d; ++i) {
      const T c = px[i] - mean;
      var += c * c;
    }
    var /= static_cast<T>(d);
    const T istd = T(1) / std::sqrt(var + eps);
    (*stats)[r * 2] = mean;
    (*stats)[r * 2 + 1] = istd;
    T* py = out.data() + r * d;
    for (i64 i = 0; i < d; ++i)
      py[i] = gamma->value[i] * (px[i] - mean) * istd + beta->value[i];
  }
  return make_op<T>(std::move(out), {x, gamma, beta},
                    [d, rows, stats](Node<T>& self) {
                      const auto& x = self.inputs[0];
                      const auto& gamma = self.inputs[1];
                      const auto& beta = self.inputs[2];
                      Tensor<T>* gx =
                          x->requires_grad ? &grad_of(x) : nullptr;
                      Tensor<T>* gg =
                          gamma->requires_grad ? &grad_of(gamma) : nullptr;
                      Tensor<T>* gb =
                          beta->requires_grad ? &grad_of(beta) : nullptr;
                      for (i64 r = 0; r < rows; ++r) {
                        const T mean = (*stats)[r * 2];
                        const T istd = (*stats)[r * 2 + 1];
                        const T* px = x->value.data() + r * d;
                        const T* go = self.grad.data() + r * d;
                        T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
                        for (i64 i = 0; i < d; ++i) {
                          const T xhat = (px[i] - mean) * istd;
                          const T dxhat = go[i] * gamma->value[i];
                          sum_dxhat += dxhat;
                          sum_dxhat_xhat += dxhat * xhat;
                          if (gg) (*gg)[i] += go[i] * xhat;
                          if (gb) (*gb)[i] += go[i];
                        }
                        if (gx) {
                          const T inv_d = T(1) / static_cast<T>(d);
                          T* pgx = gx->data() + r * d;
                          for (i64 i = 0; i < d; ++i) {
                            const T xhat = (px[i] - mean) * istd;
                            const T dxhat = go[i] * gamma->value[i];
                            pgx[i] += istd * (dxhat - inv_d * sum_dxhat -
                                              xhat * inv_d * sum_dxhat_xhat);
                          }
                        }
                      }
                    });
}

/// GroupNorm for NCHW input with per-channel affine parameters.
template <class T>
Var<T> groupnorm(const Var<T>& x, i64 groups, const Var<T>& gamma,
                 const Var<T>& beta, T eps = T(1e-5)) {
  const Shape& s = x->value.shape();
  GW_REQUIRE(s.size() == 4, "groupnorm needs NCHW");
  const i64 B = s[0], C = s[1], HW = s[2] * s[3];
  GW_REQUIRE(C % groups == 0, "groupnorm channel/group mismatch");
  const i64 cpg = C / groups;
  const i64 gsize = cpg * HW;
  Tensor<T> out(s);
  auto stats = std::make_shared<Tensor<T>>(Shape{B * groups, 2});
#pragma omp parallel for schedule(static)
  for (i64 bg = 0; bg < B * groups; ++bg) {
    const i64 b = bg / groups, g = bg % groups;
    const T* px = x->value.data() + (b * C + g * cpg) * HW;
    T mean = T(0);
    for (i64 i = 0; i < gsize; ++i) mean += px[i];
    mean /= static_cast<T>(gsize);
    T var = T(0);
    for (i64 i = 0; i < gsize; ++i) {
      const T c = px[i] - mean;
      var += c * c;
    }
    var /= static_cast<T>(gsize);
    const T istd = T(1) / std::sqrt(var + eps);
    (*stats)[bg * 2] = mean;
    (*stats)[bg * 2 + 1] = istd;
    T* py = out.data() + (b * C + g * cpg) * HW;
    for (i64 c = 0; c < cpg; ++c) {
      const T ga = gamma->value[g * cpg + c], be = beta->value[g * cpg + c];
      for (i64 i = 0; i < HW; ++i)
        py[c * HW + i] = ga * (px[c * HW + i] - mean) * istd + be;
    }
  }
  return make_op<T>(
      std::move(out), {x, gamma, beta},
      [B, C, HW, groups, cpg, gsize, stats](Node<T>& self) {
        const auto& x = self.inputs[0];
        const auto& gamma = self.inputs[1];
        const auto& beta = self.inputs[2];
        Tensor<T>* gx = x->requires_grad ? &grad_of(x) : nullptr;
        Tensor<T>* gg = gamma->requires_grad ? &grad_of(gamma) : nullptr;
        Tensor<T>* gb = beta->requires_grad ? &grad_of(beta) : nullptr;
        for (i64 bg = 0; bg < B * groups; ++bg) {
          const i64 b = bg / groups, g = bg % groups;
          const i64 base = (b * C + g * cpg) * HW;
          const T mean = (*stats)[bg * 2];
          const T istd = (*stats)[bg * 2 + 1];
          const T* px = x->value.data() + base;
          const T* go = self.grad.data() + base;
          T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
          for (i64 c = 0; c < cpg; ++c) {
            const T ga = gamma->value[g * cpg + c];
            for (i64 i = 0; i < HW; ++i) {
              const i64 j = c * HW + i;
              const T xhat = (px[j] - mean) * istd;
              const T dxhat = go[j] * ga;
              sum_dxhat += dxhat;
              sum_dxhat_xhat += dxhat * xhat;
              if (gg) (*gg)[g * cpg + c] += go[j] * xhat;
              if (gb) (*gb)[g * cpg + c] += go[j];
            }
          }
          if (gx) {
            const T invn = T(1) / static_cast<T>(gsize);
            T* pgx = gx->data() + base;
            for (i64 c = 0; c < cpg; ++c) {
              const T ga = gamma->value[g * cpg + c];
              for (i64 i = 0; i < HW; ++i) {
                const i64 j = c * HW + i;
                const T xhat = (px[j] - mean) * istd;
                const T dxhat = go[j] * ga;
                pgx[j] += istd * (dxhat - invn * sum_dxhat -
                                  xhat * invn * sum_dxhat_xhat);
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Conv / pooling / pixel ops (NCHW)
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
void im2col(const T* img, i64 C, i64 H, i64 W, i64 kh, i64 kw, i64 stride,
            i64 pad, i64 Ho, i64 Wo, T* col) {
  // col layout: [C*kh*kw, Ho*Wo]
  for (i64 c = 0; c < C; ++c)
    for (i64 ky = 0; ky < kh; ++ky)
      for (i64 kx = 0; kx < kw; ++kx) {
        T* dst = col + ((c * kh + ky) * kw + kx) * (Ho * Wo);
        for (i64 oy = 0; oy < Ho; ++oy) {
          const i64 iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) {
            for (i64 ox = 0; ox < Wo; ++ox) dst[oy * Wo + ox] = T(0);
            continue;
          }
          for (i64 ox = 0; ox < Wo; ++ox) {
            const i64 ix = ox * stride + kx - pad;
            dst[oy * Wo + ox] =
                (ix >= 0 && ix < W) ? img[(c * H + iy) * W + ix] : T(0);
          }
        }
      }
}

template <class T>
void col2im(const T* col, i64 C, i64 H, i64 W, i64 kh, i64 kw, i64 stride,
            i64 pad, i64 Ho, i64 Wo, T* img) {
  for (i64 c = 0; c < C; ++c)
    for (i64 ky = 0; ky < kh; ++ky)
      for (i64 kx = 0; kx < kw; ++kx) {
        const T* src = col + ((c * kh + ky) * kw + kx) * (Ho * Wo);
        for (i64 oy = 0; oy < Ho; ++oy) {
          const i64 iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) continue;
          for (i64 ox = 0; ox < Wo; ++ox) {
            const i64 ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < W) img[(c * H + iy) * W + ix] += src[oy * Wo + ox];
          }
        }
      }
}

}  // namespace detail

/// 2-D convolution, NCHW. w: [Cout, Cin, kh, kw], b: [Cout].
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, i64 stride,
              i64 pad) {
  const Shape& xs = x->value.shape();
  const Shape& ws = w->value.shape();
  GW_REQUIRE(xs.size() == 4 && ws.size() == 4, "conv2d wants NCHW");
  const i64 B = xs[0], C = xs[1], H = xs[2], W = xs[3];
  const i64 Cout = ws[0], kh = ws[2], kw = ws[3];
  GW_REQUIRE(ws[1] == C, "conv2d channel mismatch");
  const i64 Ho = (H + 2 * pad - kh) / stride + 1;
  const i64 Wo = (W + 2 * pad - kw) / stride + 1;
  const i64 K = C * kh * kw;
  const i64 P = Ho * Wo;
  auto col = std::make_shared<Tensor<T>>(Shape{B, K, P});
  init_threading();
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < B; ++i)
    detail::im2col(x->value.data() + i * C * H * W, C, H, W, kh, kw, stride,
                   pad, Ho, Wo, col->data() + i * K * P);
  Tensor<T> out(Shape{B, Cout, Ho, Wo});
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < B; ++i) {
    T* po = out.data() + i * Cout * P;
    for (i64 co = 0; co < Cout; ++co)
      std::fill_n(po + co * P, P, b->value[co]);
    gemm<T>(false, false, Cout, P, K, T(1), w->value.data(), K,
            col->data() + i * K * P, P, T(1), po, P);
  }
  return make_op<T>(
      std::move(out), {x, w, b},
      [B, C, H, W, Cout, kh, kw, stride, pad, Ho, Wo, K, P, col](Node<T>& self) {
        const auto& x = self.inputs[0];
        const auto& w = self.inputs[1];
        const auto& b = self.inputs[2];
        if (b->requires_grad) {
          auto& gb = grad_of(b);
          for (i64 i = 0; i < B; ++i)
            for (i64 co = 0; co < Cout; ++co) {
              const T* g = self.grad.data() + (i * Cout + co) * P;
              T acc = T(0);
              for (i64 p = 0; p < P; ++p) acc += g[p];
              gb[co] += acc;
            }
        }
        if (w->requires_grad) {
          auto& gwt = grad_of(w);
          for (i64 i = 0; i < B; ++i)
            gemm<T>(false, true, Cout, K, P, T(1),
                    self.grad.data() + i * Cout * P, P, col->data() + i * K * P,
                    P, T(1), gwt.data(), K);
        }
        if (x->requires_grad) {
          auto& gx = grad_of(x);
#pragma omp parallel for schedule(static)
          for (i64 i = 0; i < B; ++i) {
            Tensor<T> dcol(Shape{K, P});
            gemm<T>(true, false, K, P, Cout, T(1), w->value.data(), K,
                    self.grad.data() + i * Cout * P, P, T(0), dcol.data(), P);
            detail::col2im(dcol.data(), C, H, W, kh, kw, stride, pad, Ho, Wo,
                           gx.data() + i * C * H * W);
          }
        }
      });
}

/// Average pooling with kernel=stride=k (exact division required).
template <class T>
Var<T> avg_pool2d(const Var<T>& x, i64 k) {
  const Shape& s = x->value.shape();
  GW_REQUIRE(s.size() == 4 && s[2] % k == 0 && s[3] % k == 0, "avg_pool2d");
  const i64 B = s[0], C = s[1], H = s[2], W = s[3];
  const i64 Ho = H / k, Wo = W / k;
  Tensor<T> out(Shape{B, C, Ho, Wo});
  const T inv = T(1) / static_cast<T>(k * k);
  for (i64 bc = 0; bc < B * C; ++bc) {
    const T* px = x->value.data() + bc * H * W;
    T* py = out.data() + bc * Ho * Wo;
    for (i64 oy = 0; oy < Ho; ++oy)
      for (i64 ox = 0; ox < Wo; ++ox) {
        T acc = T(0);
        for (i64 dy = 0; dy < k; ++dy)
          for (i64 dx = 0; dx < k; ++dx)
            acc += px[(oy * k + dy) * W + ox * k + dx];
        py[oy * Wo + ox] = acc * inv;
      }
  }
  return make_op<T>(std::move(out), {x}, [B, C, H, W, Ho, Wo, k, inv](Node<T>& self) {
    auto& g = grad_of(self.inputs[0]);
    for (i64 bc = 0; bc < B * C; ++bc) {
      T* pg = g.data() + bc * H * W;
      const T* po = self.grad.data() + bc * Ho * Wo;
      for (i64 oy = 0; oy < Ho; ++oy)
        for (i64 ox = 0; ox < Wo; ++ox) {
          const T gv = po[oy * Wo + ox] * inv;
          for (i64 dy = 0; dy < k; ++dy)
            for (i64 dx = 0; dx < k; ++dx)
              pg[(oy * k + dy) * W + ox * k + dx] += gv;
        }
    }
  });
}

/// Nearest-neighbor 2x upsampling.
template <class T>
Var<T> upsample_nearest2(const Var<T>& x) {
  const Shape& s = x->value.shape();
  GW_REQUIRE(s.size() == 4, "upsample_nearest2 wants NCHW");
  const i64 B = s[0], C = s[1], H = s[2], W = s[3];
  Tensor<T> out(Shape{B, C, H * 2, W * 2});
  for (i64 bc = 0; bc < B * C; ++bc) {
    const T* px = x->value.data() + bc * H * W;
    T* py = out.data() + bc * H * W * 4;
    for (i64 y = 0; y < H * 2; ++y)
      for (i64 x2 = 0; x2 < W * 2; ++x2)
        py[y * W * 2 + x2] = px[(y / 2) * W + x2 / 2];
  }
  return make_op<T>(std::move(out), {x}, [B, C, H, W](Node<T>& self) {
    auto& g = grad_of(self.inputs[0]);
    for (i64 bc = 0; bc < B * C; ++bc) {
      T* pg = g.data() + bc * H * W;
      const T* po = self.grad.data() + bc * H * W * 4;
      for (i64 y = 0; y < H * 2; ++y)
        for (i64 x2 = 0; x2 < W * 2; ++x2)
          pg[(y / 2) * W + x2 / 2] += po[y * W * 2 + x2];
    }
  });
}

/// Pixel shuffle: [B, C*r*r, H, W] -> [B, C, H*r, W*r].
template <class T>
Var<T> pixel_shuffle(const Var<T>& x, i64 r) {
  const Shape& s = x->value.shape();
  GW_REQUIRE(s.size() == 4 && s[1] % (r * r) == 0, "pixel_shuffle shape");
  const i64 B = s[0], C = s[1] / (r * r), H = s[2], W = s[3];
  Tensor<T> out(Shape{B, C, H * r, W * r});
  for (i64 b = 0; b < B; ++b)
    for (i64 c = 0; c < C; ++c)
      for (i64 y = 0; y < H * r; ++y)
        for (i64 x2 = 0; x2 < W * r; ++x2) {
          const i64 ci = c * r * r + (y % r) * r + (x2 % r);
          out[((b * C + c) * H * r + y) * W * r + x2] =
              x->value[((b * C * r * r + ci) * H + y / r) * W + x2 / r];
        }
  return make_op<T>(std::move(out), {x}, [B, C, H, W, r](Node<T>& self) {
    auto& g = grad_of(self.inputs[0]);
    for (i64 b = 0; b < B; ++b)
      for (i64 c = 0; c < C; ++c)
        for (i64 y = 0; y < H * r; ++y)
          for (i64 x2 = 0; x2 < W * r; ++x2) {
            const i64 ci = c * r * r + (y % r) * r + (x2 % r);
            g[((b * C * r * r + ci) * H + y / r) * W + x2 / r] +=
                self.grad[((b * C + c) * H * r + y) * W * r + x2];
          }
  });
}

}  // namespace gw::ad
