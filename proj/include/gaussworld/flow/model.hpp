// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gaussworld/core/nn.hpp"
#include "gaussworld/core/optim.hpp"
#include "gaussworld/flow/reshape.hpp"

namespace gw::flow {

struct FlowConfig {
  i64 units = 4;   // repeated [spatial, temporal, cross-view] triples
  i64 width = 192;
  i64 patch = 2;
  i64 heads = 6;
  i64 latent_channels = 8;
  i64 text_vocab = 8;
  i64 text_width = 32;
  i64 max_frames = 40;
  double p_drop_temporal = 0.1;
  double p_drop_crossview = 0.1;
  bool allow_joint_drop = false;
  double p_cond_drop = 0.1;

  void validate() const {
    GW_REQUIRE(width % heads == 0, "flow width % heads != 0");
    GW_REQUIRE(units >= 1 && patch >= 1, "flow config invalid");
  }
};

/// Conditioning for one clip window.
template <class T>
struct ConditionBundle {
  Tensor<T> control;            // [T,V,2,h,w] box+lane rasters at latent res
  std::vector<i64> text_tokens;
  std::vector<char> ref_mask;   // [T], true = clean reference frame
  std::vector<char> view_valid; // [V]
  bool drop_conditioning = false;  // classifier-free null

  i64 frames() const { return control.dim(0); }
  i64 views() const { return control.dim(1); }

  i64 ref_count() const {
    i64 k = 0;
    for (char c : ref_mask) k += (c != 0);
    return k;
  }
};

/// Which appended block families are active this step.
struct BlockMask {
  bool temporal_on = true;
  bool crossview_on = true;
};

/// Per-step block dropout: with probability p each appended family acts as
/// identity. When both families would drop in one step (and both exist),
/// the temporal drop wins unless joint drops are allowed.
inline BlockMask block_dropout(const FlowConfig& cfg, Rng& rng, i64 frames,
                               i64 views) {
  BlockMask m;
  m.temporal_on = !rng.bernoulli(cfg.p_drop_temporal);
  m.crossview_on = !rng.bernoulli(cfg.p_drop_crossview);
  if (!cfg.allow_joint_drop && frames > 1 && views > 1 && !m.temporal_on &&
      !m.crossview_on)
    m.crossview_on = true;
  return m;
}

namespace detail {

using gw::ad::Var;

/// Pre-norm block with adaptive modulation (shift/scale/gate per sublayer)
/// from a conditioning vector. Gates are zero-initialized so an untrained
/// block is exactly the identity. Optionally adds a positional embedding
/// over the sequence axis (inside the residual branch only).
template <class T>
struct AdaBlock {
  nn::SelfAttention<T> attn;
  nn::Mlp<T> mlp;
  nn::Linear<T> ada;  // width -> 6*width, zero-init
  Var<T> ln_gamma, ln_beta;
  Var<T> pos;  // optional [max_len, width]
  i64 width = 0;

  AdaBlock() = default;
  AdaBlock(nn::ParamStore<T>& ps, const std::string& name, i64 dim, i64 heads,
           i64 pos_len)
      : attn(ps, name + ".attn", dim, heads),
        mlp(ps, name + ".mlp", dim, 4 * dim),
        ada(ps, name + ".ada", dim, 6 * dim, true),
        width(dim) {
    ln_gamma = ad::constant(Tensor<T>(Shape{dim}, T(1)));
    ln_beta = ad::constant(Tensor<T>(Shape{dim}));
    if (pos_len > 0) pos = ps.create_randn(name + ".pos", {pos_len, dim}, T(0.02));
  }

  Var<T> operator()(const Var<T>& x, const Var<T>& cond,
                    const Tensor<T>* key_mask = nullptr) const {
    const i64 D = width;
    const i64 L = x->value.dim(1);
    auto m = ada(cond);  // [1, 6D]
    auto piece = [&](i64 k) {
      return ad::reshape(ad::slice(m, 1, k * D, D), {1, 1, D});
    };
    auto modulate = [&](const Var<T>& h, i64 shift_idx, i64 scale_idx) {
      auto scaled = ad::mul(h, ad::add_scalar(piece(scale_idx), T(1)));
      return ad::add(scaled, piece(shift_idx));
    };
    auto h = modulate(ad::layernorm(x, ln_gamma, ln_beta), 0, 1);
    if (pos) {
      GW_REQUIRE(L <= pos->value.dim(0), "sequence longer than pos table");
      auto p = ad::reshape(ad::slice(pos, 0, 0, L),
                           {i64(1), L, D});
      h = ad::add(h, p);
    }
    auto x1 = ad::add(x, ad::mul(attn(h, key_mask), piece(2)));
    auto h2 = modulate(ad::layernorm(x1, ln_gamma, ln_beta), 3, 4);
    return ad::add(x1, ad::mul(mlp(h2), piece(5)));
  }
};

}  // namespace detail

/// Rectified-flow transformer over latent video grids: interleaved
/// spatial / temporal / cross-view attention with adaptive normalization
/// from timestep + text conditioning, channel-concatenated control rasters
/// and a reference-mask channel.
template <class T>
class LatentFlowTransformer {
 public:
  using Var = ad::Var<T>;

  LatentFlowTransformer(u64 seed, const FlowConfig& cfg)
      : cfg_(cfg), params_(seed) {
    cfg.validate();
    const i64 D = cfg.width;
    patch_ = nn::Conv2d<T>(params_, "patch", cfg.latent_channels + 3, D,
                           cfg.patch, cfg.patch, 0);
    time_mlp1_ = nn::Linear<T>(params_, "time_mlp1", kTimeFreqs, D);
    time_mlp2_ = nn::Linear<T>(params_, "time_mlp2", D, D);
    text_embed_ = params_.create_randn("text_embed",
                                       {cfg.text_vocab, cfg.text_width}, T(0.02));
    text_proj_ = nn::Linear<T>(params_, "text_proj", cfg.text_width, D);
    null_text_ = params_.create_randn("null_text", {1, D}, T(0.02));
    for (i64 u = 0; u < cfg.units; ++u) {
      const std::string b = "unit" + std::to_string(u);
      spatial_.push_back(detail::AdaBlock<T>(params_, b + ".spatial", D, cfg.heads, 0));
      temporal_.push_back(detail::AdaBlock<T>(params_, b + ".temporal", D,
                                              cfg.heads, cfg.max_frames));
      crossview_.push_back(detail::AdaBlock<T>(params_, b + ".crossview", D,
                                               cfg.heads, 0));
    }
    final_ln_gamma_ = ad::constant(Tensor<T>(Shape{D}, T(1)));
    final_ln_beta_ = ad::constant(Tensor<T>(Shape{D}));
    head_ = nn::Linear<T>(params_, "head", D,
                          cfg.patch * cfg.patch * cfg.latent_channels);
  }

  const FlowConfig& config() const { return cfg_; }
  nn::ParamStore<T>& params() { return params_; }
  const nn::ParamStore<T>& params() const { return params_; }

  /// Predicts the rectified-flow target (z0 - eps). t must lie in (0, 1];
  /// the sampler's first Euler step evaluates at exactly t = 1.
  Var forward(const Var& z_t, double t, const ConditionBundle<T>& cond,
              const BlockMask& mask = {}, bool spatial_only = false) const {
    GW_REQUIRE(t > 0.0 && t <= 1.0, "flow timestep outside (0,1]");
    const Shape& s = z_t->value.shape();
    GW_REQUIRE(s.size() == 5, "forward wants [T,V,C,h,w]");
    const i64 Tn = s[0], V = s[1], C = s[2], h = s[3], w = s[4];
    GW_REQUIRE(C == cfg_.latent_channels, "latent channel mismatch");
    GW_REQUIRE(cond.control.shape() == Shape({Tn, V, 2, h, w}),
               "control raster shape mismatch");
    GW_REQUIRE(static_cast<i64>(cond.ref_mask.size()) == Tn,
               "reference mask length mismatch");

    // Channel-concatenate control and the reference-mask channel.
    Tensor<T> extra(Shape{Tn, V, 3, h, w});
    const i64 hw = h * w;
    for (i64 tv = 0; tv < Tn * V; ++tv) {
      const T refv = cond.ref_mask[tv / V] ? T(1) : T(0);
      const T* ctrl = cond.control.data() + tv * 2 * hw;
      T* dst = extra.data() + tv * 3 * hw;
      if (cond.drop_conditioning)
        std::fill_n(dst, 2 * hw, T(0));
      else
        std::copy_n(ctrl, 2 * hw, dst);
      std::fill_n(dst + 2 * hw, hw, refv);
    }
    auto zin = ad::concat<T>({z_t, ad::constant(std::move(extra))}, 2);

    const i64 p = cfg_.patch, D = cfg_.width;
    const i64 hp = h / p, wp = w / p;
    auto tok4 = patch_(ad::reshape(zin, {Tn * V, C + 3, h, w}));
    auto grid = ad::reshape(tok4, {Tn, V, D, hp, wp});

    auto cond_vec = condition_vector(t, cond);  // [1,D]

    // Per-sequence key masks for cross-view attention.
    Tensor<T> view_mask;
    bool any_invalid = false;
    for (char c : cond.view_valid) any_invalid |= (c == 0);
    if (any_invalid) {
      view_mask = Tensor<T>(Shape{Tn * hp * wp, V});
      for (i64 b = 0; b < Tn * hp * wp; ++b)
        for (i64 v = 0; v < V; ++v)
          view_mask[b * V + v] = cond.view_valid[v] ? T(0) : T(-1e9);
    }

    const Shape gshape = {Tn, V, D, hp, wp};
    for (i64 u = 0; u < cfg_.units; ++u) {
      grid = unreshape_spatial(spatial_[u](reshape_spatial(grid), cond_vec),
                               gshape);
      if (!spatial_only && Tn > 1 && mask.temporal_on)
        grid = unreshape_temporal(temporal_[u](reshape_temporal(grid), cond_vec),
                                  gshape);
      if (!spatial_only && V > 1 && mask.crossview_on)
        grid = unreshape_crossview(
            crossview_[u](reshape_crossview(grid), cond_vec,
                          any_invalid ? &view_mask : nullptr),
            gshape);
    }

    auto tokens = reshape_spatial(grid);  // [TV, hp*wp, D]
    auto flat = ad::reshape(tokens, {Tn * V * hp * wp, D});
    auto out = head_(ad::layernorm(flat, final_ln_gamma_, final_ln_beta_));
    // Unpatch: [TV, hp, wp, p, p, C] -> [T,V,C,h,w]
    auto arranged = ad::permute(
        ad::reshape(out, {Tn * V, hp, wp, p, p, C}), {0, 5, 1, 3, 2, 4});
    return ad::reshape(arranged, {Tn, V, C, h, w});
  }

 private:
  static constexpr i64 kTimeFreqs = 64;

  ad::Var<T> condition_vector(double t, const ConditionBundle<T>& cond) const {
    Tensor<T> sincos = nn::sinusoidal_embedding<T>(t * 1000.0, kTimeFreqs);
    auto te = time_mlp2_(ad::silu(
        time_mlp1_(ad::reshape(ad::constant(std::move(sincos)), {1, kTimeFreqs}))));
    ad::Var<T> tx;
    if (cond.drop_conditioning || cond.text_tokens.empty()) {
      tx = null_text_;
    } else {
      std::vector<i64> ids;
      for (i64 id : cond.text_tokens) {
        GW_REQUIRE(id >= 0 && id < cfg_.text_vocab, "text token out of vocab");
        ids.push_back(id);
      }
      auto rows = ad::take_dim0(text_embed_, ids);  // [n, text_width]
      Tensor<T> ones(Shape{1, i64(ids.size())}, T(1) / T(ids.size()));
      auto pooled = ad::matmul(ad::constant(std::move(ones)), rows);
      tx = text_proj_(pooled);
    }
    return ad::add(te, tx);
  }

  FlowConfig cfg_;
  nn::ParamStore<T> params_;
  nn::Conv2d<T> patch_;
  nn::Linear<T> time_mlp1_, time_mlp2_, text_proj_, head_;
  ad::Var<T> text_embed_, null_text_, final_ln_gamma_, final_ln_beta_;
  std::vector<detail::AdaBlock<T>> spatial_, temporal_, crossview_;
};

}  // namespace gw::flow
