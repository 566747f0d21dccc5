// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>

#include "gaussworld/core/autodiff.hpp"
#include "gaussworld/core/rng.hpp"

namespace gw::nn {

using gw::ad::Var;

/// Named parameter registry. Parameters are created in call order with a
/// per-name seeded stream, and iterated in name order everywhere (optimizer,
/// checkpoints), which keeps training trajectories reproducible.
template <class T>
class ParamStore {
 public:
  explicit ParamStore(u64 seed) : rng_(seed) {}

  Var<T> create(const std::string& name, Tensor<T> init) {
    GW_REQUIRE(!params_.count(name), "duplicate parameter " + name);
    auto v = ad::leaf(std::move(init));
    params_[name] = v;
    return v;
  }

  Var<T> create_randn(const std::string& name, Shape shape, T stddev) {
    Rng r = rng_.child(name_hash(name));
    return create(name, Tensor<T>::randn(std::move(shape), r, stddev));
  }

  Var<T> create_zeros(const std::string& name, Shape shape) {
    return create(name, Tensor<T>::zeros(std::move(shape)));
  }

  Var<T> create_full(const std::string& name, Shape shape, T v) {
    return create(name, Tensor<T>::full(std::move(shape), v));
  }

  const std::map<std::string, Var<T>>& params() const { return params_; }
  std::map<std::string, Var<T>>& params() { return params_; }

  Var<T> at(const std::string& name) const {
    auto it = params_.find(name);
    GW_REQUIRE(it != params_.end(), "unknown parameter " + name);
    return it->second;
  }

  void zero_grad() {
    for (auto& [k, v] : params_) ad::clear_grad(v);
  }

  i64 total_size() const {
    i64 n = 0;
    for (const auto& [k, v] : params_) n += v->value.numel();
    return n;
  }

  /// True iff no parameter accumulated a gradient in the last backward pass.
  bool grads_all_zero() const {
    for (const auto& [k, v] : params_) {
      if (!v->grad_ready) continue;
      for (i64 i = 0; i < v->grad.numel(); ++i)
        if (v->grad[i] != T(0)) return false;
    }
    return true;
  }

  static u64 name_hash(const std::string& s) {
    u64 h = 1469598103934665603ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    return h;
  }

 private:
  std::map<std::string, Var<T>> params_;
  Rng rng_;
};

template <class T>
struct Linear {
  Var<T> w, b;

  Linear() = default;
  Linear(ParamStore<T>& ps, const std::string& name, i64 in, i64 out,
         bool zero_init = false) {
    if (zero_init) {
      w = ps.create_zeros(name + ".w", {out, in});
    } else {
      const T std = static_cast<T>(std::sqrt(2.0 / (in + out)));
      w = ps.create_randn(name + ".w", {out, in}, std);
    }
    b = ps.create_zeros(name + ".b", {out});
  }

  /// x: [M, in] -> [M, out]
  Var<T> operator()(const Var<T>& x) const { return ad::linear(x, w, b); }
};

template <class T>
struct Conv2d {
  Var<T> w, b;
  i64 stride = 1, pad = 0;

  Conv2d() = default;
  Conv2d(ParamStore<T>& ps, const std::string& name, i64 cin, i64 cout, i64 k,
         i64 stride_, i64 pad_, bool zero_init = false)
      : stride(stride_), pad(pad_) {
    if (zero_init) {
      w = ps.create_zeros(name + ".w", {cout, cin, k, k});
    } else {
      const T std = static_cast<T>(std::sqrt(2.0 / (cin * k * k)));
      w = ps.create_randn(name + ".w", {cout, cin, k, k}, std);
    }
    b = ps.create_zeros(name + ".b", {cout});
  }

  Var<T> operator()(const Var<T>& x) const {
    return ad::conv2d(x, w, b, stride, pad);
  }
};

template <class T>
struct GroupNorm {
  Var<T> gamma, beta;
  i64 groups = 1;

  GroupNorm() = default;
  GroupNorm(ParamStore<T>& ps, const std::string& name, i64 channels,
            i64 groups_)
      : groups(groups_) {
    gamma = ps.create_full(name + ".gamma", {channels}, T(1));
    beta = ps.create_zeros(name + ".beta", {channels});
  }

  Var<T> operator()(const Var<T>& x) const {
    return ad::groupnorm(x, groups, gamma, beta);
  }
};

template <class T>
struct LayerNorm {
  Var<T> gamma, beta;

  LayerNorm() = default;
  LayerNorm(ParamStore<T>& ps, const std::string& name, i64 dim) {
    gamma = ps.create_full(name + ".gamma", {dim}, T(1));
    beta = ps.create_zeros(name + ".beta", {dim});
  }

  Var<T> operator()(const Var<T>& x) const {
    return ad::layernorm(x, gamma, beta);
  }
};

/// Multi-head self-attention over [B, L, D] token batches.
/// `key_mask` (optional) has shape [B, L] with 0 for valid keys and a large
/// negative number for masked ones; it is added to every query row.
template <class T>
struct SelfAttention {
  Linear<T> qkv, proj;
  i64 heads = 1, dim = 0;

  SelfAttention() = default;
  SelfAttention(ParamStore<T>& ps, const std::string& name, i64 dim_,
                i64 heads_, bool zero_init_proj = false)
      : qkv(ps, name + ".qkv", dim_, 3 * dim_),
        proj(ps, name + ".proj", dim_, dim_, zero_init_proj),
        heads(heads_),
        dim(dim_) {
    GW_REQUIRE(dim_ % heads_ == 0, "attention dim % heads != 0");
  }

  Var<T> operator()(const Var<T>& x, const Tensor<T>* key_mask = nullptr) const {
    const Shape& s = x->value.shape();
    GW_REQUIRE(s.size() == 3, "attention input must be [B,L,D]");
    const i64 B = s[0], L = s[1], D = s[2];
    const i64 dh = D / heads;
    auto q3 = qkv(ad::reshape(x, {B * L, D}));          // [B*L, 3D]
    auto q5 = ad::reshape(q3, {B, L, 3, heads, dh});
    auto qp = ad::permute(q5, {2, 0, 3, 1, 4});          // [3,B,h,L,dh]
    auto qs = ad::reshape(qp, {3, B * heads, L, dh});
    auto q = ad::reshape(ad::slice(qs, 0, 0, 1), {B * heads, L, dh});
    auto k = ad::reshape(ad::slice(qs, 0, 1, 1), {B * heads, L, dh});
    auto v = ad::reshape(ad::slice(qs, 0, 2, 1), {B * heads, L, dh});
    auto scores = ad::scale(ad::bmm(q, k, false, true),
                            static_cast<T>(1.0 / std::sqrt(double(dh))));
    if (key_mask) {
      GW_REQUIRE(key_mask->shape() == Shape({B, L}), "key_mask shape");
      Tensor<T> m(Shape{B * heads, 1, L});
      for (i64 b = 0; b < B; ++b)
        for (i64 h = 0; h < heads; ++h)
          std::copy_n(key_mask->data() + b * L, L,
                      m.data() + (b * heads + h) * L);
      scores = ad::add(scores, ad::constant(std::move(m)));
    }
    auto probs = ad::softmax_lastdim(scores);
    auto o = ad::bmm(probs, v);                          // [B*h, L, dh]
    auto om = ad::permute(ad::reshape(o, {B, heads, L, dh}), {0, 2, 1, 3});
    return ad::reshape(proj(ad::reshape(om, {B * L, D})), {B, L, D});
  }
};

/// Two-layer MLP with GELU, ratio * dim hidden width.
template <class T>
struct Mlp {
  Linear<T> fc1, fc2;

  Mlp() = default;
  Mlp(ParamStore<T>& ps, const std::string& name, i64 dim, i64 hidden,
      bool zero_init_out = false)
      : fc1(ps, name + ".fc1", dim, hidden),
        fc2(ps, name + ".fc2", hidden, dim, zero_init_out) {}

  Var<T> operator()(const Var<T>& x) const {
    const Shape s = x->value.shape();
    const i64 d = s.back();
    const i64 m = x->value.numel() / d;
    auto h = fc2(ad::gelu(fc1(ad::reshape(x, {m, d}))));
    Shape os = s;
    os.back() = h->value.shape().back();
    return ad::reshape(h, os);
  }
};

/// Pre-norm transformer block: x += attn(LN(x)); x += mlp(LN(x)).
template <class T>
struct TransformerBlock {
  LayerNorm<T> ln1, ln2;
  SelfAttention<T> attn;
  Mlp<T> mlp;

  TransformerBlock() = default;
  TransformerBlock(ParamStore<T>& ps, const std::string& name, i64 dim,
                   i64 heads, i64 mlp_hidden)
      : ln1(ps, name + ".ln1", dim),
        ln2(ps, name + ".ln2", dim),
        attn(ps, name + ".attn", dim, heads),
        mlp(ps, name + ".mlp", dim, mlp_hidden) {}

  Var<T> operator()(const Var<T>& x, const Tensor<T>* key_mask = nullptr) const {
    auto h = ad::add(x, attn(ln1(x), key_mask));
    return ad::add(h, mlp(ln2(h)));
  }
};

/// Sinusoidal embedding of a scalar into `dim` features (dim even).
template <class T>
Tensor<T> sinusoidal_embedding(double t, i64 dim, double max_period = 1e4) {
  Tensor<T> out(Shape{dim});
  const i64 half = dim / 2;
  for (i64 i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(max_period) * double(i) / double(half));
    out[i] = static_cast<T>(std::sin(t * freq));
    out[half + i] = static_cast<T>(std::cos(t * freq));
  }
  return out;
}

}  // namespace gw::nn
