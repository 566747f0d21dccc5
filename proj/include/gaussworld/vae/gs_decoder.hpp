// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gaussworld/core/nn.hpp"
#include "gaussworld/splat/ops.hpp"
#include "gaussworld/vae/config.hpp"

namespace gw::vae {

/// One valid context frame-view entering the GS decoder.
template <class T>
struct GsContextInput {
  Var<T> latent;  // [C,h,w]
  CameraModel camera;
  double time = 0;
  i64 view = 0;
};

struct GsTargetSpec {
  CameraModel camera;
  double time = 0;
  i64 view = 0;
};

/// Grids for every context frame-view plus per-target sky/exposure tokens.
template <class T>
struct GsDecoderOutput {
  std::vector<Var<T>> grids;  // [15,H,W], aligned with the context inputs
  std::vector<Var<T>> sky;    // [3] per target
  std::vector<Var<T>> gain;   // [1] per target
  std::vector<Var<T>> bias;   // [1] per target
};

template <class T>
struct TargetRender {
  Var<T> rgb;    // [3,H,W] after sky + exposure
  Var<T> depth;  // [1,H,W]
  Var<T> alpha;  // [1,H,W]
};

/// Transformer over patchified context latents. Tokens carry learned
/// positional embeddings plus continuous-time and view embeddings; a
/// learned auxiliary token per requested target produces sky color and
/// exposure. Invalid views never enter the token sequence, so outputs are
/// exactly independent of their content.
template <class T>
class GsDecoder {
 public:
  GsDecoder() = default;
  GsDecoder(nn::ParamStore<T>& ps, const std::string& name, const VaeConfig& cfg,
            i64 image_h, i64 image_w)
      : cfg_(cfg), image_h_(image_h), image_w_(image_w) {
    const i64 f = cfg.downsample, p = cfg.patch;
    hp_ = image_h / f / p;
    wp_ = image_w / f / p;
    GW_REQUIRE(hp_ >= 1 && wp_ >= 1 && image_h % (f * p) == 0 &&
                   image_w % (f * p) == 0,
               "image size must be divisible by downsample*patch");
    const i64 D = cfg.gs_width;
    patch_ = nn::Conv2d<T>(ps, name + ".patch", cfg.latent_channels, D,
                           cfg.patch, cfg.patch, 0);
    pos_ = ps.create_randn(name + ".pos", {hp_ * wp_, D}, T(0.02));
    view_ = ps.create_randn(name + ".view", {cfg.max_views, D}, T(0.02));
    time_proj_ = nn::Linear<T>(ps, name + ".time_proj", kTimeFreqs, D);
    aux_base_ = ps.create_randn(name + ".aux", {1, 1, D}, T(0.02));
    for (i64 l = 0; l < cfg.gs_layers; ++l)
      blocks_.push_back(nn::TransformerBlock<T>(
          ps, name + ".blk" + std::to_string(l), D, cfg.gs_heads, 4 * D));
    final_ln_ = nn::LayerNorm<T>(ps, name + ".final_ln", D);
    const i64 up = f * p;
    grid_head_ = nn::Linear<T>(ps, name + ".grid_head", D,
                               up * up * splat::kGridChannels, true);
    // Bias template: identity quaternion, configured depth/scale/opacity
    // priors, neutral color, zero velocity -- replicated over the up*up
    // sub-pixel positions read by pixel_shuffle.
    {
      Tensor<T> b(Shape{up * up * splat::kGridChannels});
      for (i64 j = 0; j < b.numel(); ++j) {
        const i64 ch = j / (up * up);
        T v = T(0);
        if (ch == 0) v = static_cast<T>(cfg.depth_bias_init);
        else if (ch == 1) v = T(1);  // quaternion w
        else if (ch >= 5 && ch <= 7) v = static_cast<T>(cfg.scale_bias_init);
        else if (ch == 8) v = static_cast<T>(cfg.opacity_bias_init);
        b[j] = v;
      }
      grid_head_.b->value = std::move(b);
    }
    sky_head_ = nn::Linear<T>(ps, name + ".sky_head", D, 3);
    exposure_head_ = nn::Linear<T>(ps, name + ".exposure_head", D, 2, true);
  }

  i64 tokens_per_frame() const { return hp_ * wp_; }

  GsDecoderOutput<T> operator()(const std::vector<GsContextInput<T>>& contexts,
                                const std::vector<GsTargetSpec>& targets) const {
    GW_REQUIRE(!contexts.empty(), "gs_decode: no valid context views");
    const i64 B = static_cast<i64>(contexts.size());
    const i64 L = hp_ * wp_;
    const i64 D = cfg_.gs_width;

    // Patchify every context latent.
    std::vector<Var<T>> lat4;
    for (const auto& c : contexts) {
      GW_REQUIRE(c.latent->value.ndim() == 3 &&
                     c.latent->value.dim(0) == cfg_.latent_channels,
                 "context latent wants [C,h,w]");
      lat4.push_back(ad::reshape(c.latent, {1, cfg_.latent_channels,
                                            c.latent->value.dim(1),
                                            c.latent->value.dim(2)}));
    }
    auto lat = ad::concat(lat4, 0);                    // [B,C,h,w]
    auto tok = patch_(lat);                            // [B,D,hp,wp]
    tok = ad::reshape(ad::permute(tok, {0, 2, 3, 1}), {B, L, D});
    tok = ad::add(tok, ad::reshape(pos_, {1, L, D}));
    // Per-context additive time/view embedding.
    std::vector<Var<T>> adds;
    for (const auto& c : contexts)
      adds.push_back(ad::reshape(embed_time_view(c.time, c.view), {1, 1, D}));
    tok = ad::add(tok, ad::concat(adds, 0));           // [B,L,D]+[B,1,D]
    auto seq = ad::reshape(tok, {1, B * L, D});

    // Auxiliary tokens, one per target render.
    const i64 n_t = static_cast<i64>(targets.size());
    if (n_t > 0) {
      std::vector<Var<T>> aux;
      for (const auto& t : targets)
        aux.push_back(ad::add(
            aux_base_, ad::reshape(embed_time_view(t.time, t.view), {1, 1, D})));
      seq = ad::concat<T>({seq, ad::concat(aux, 1)}, 1);
    }

    for (const auto& blk : blocks_) seq = blk(seq);
    seq = final_ln_(seq);

    GsDecoderOutput<T> out;
    const i64 up = cfg_.downsample * cfg_.patch;
    auto ctx_tok = ad::reshape(ad::slice(seq, 1, 0, B * L), {B * L, D});
    auto grid_flat = grid_head_(ctx_tok);  // [B*L, up*up*15]
    auto grid5 = ad::permute(
        ad::reshape(grid_flat, {B, hp_, wp_, up * up * splat::kGridChannels}),
        {0, 3, 1, 2});
    auto grids = ad::pixel_shuffle(grid5, up);  // [B,15,H,W]
    for (i64 i = 0; i < B; ++i)
      out.grids.push_back(ad::reshape(ad::slice(grids, 0, i, 1),
                                      {splat::kGridChannels, image_h_, image_w_}));
    for (i64 k = 0; k < n_t; ++k) {
      auto tokk = ad::reshape(ad::slice(seq, 1, B * L + k, 1), {1, D});
      out.sky.push_back(ad::reshape(ad::sigmoid(sky_head_(tokk)), {3}));
      auto expo = exposure_head_(tokk);  // [1,2], zero-init -> identity
      out.gain.push_back(ad::add_scalar(ad::reshape(ad::slice(expo, 1, 0, 1), {1}), T(1)));
      out.bias.push_back(ad::reshape(ad::slice(expo, 1, 1, 1), {1}));
    }
    return out;
  }

  /// Decode grids to Gaussians, transport to each target time, union all
  /// context sets, rasterize with the target camera, composite sky and
  /// apply exposure.
  std::vector<TargetRender<T>> render_targets(
      const GsDecoderOutput<T>& dec,
      const std::vector<GsContextInput<T>>& contexts,
      const std::vector<GsTargetSpec>& targets, i64* skipped = nullptr) const {
    GW_REQUIRE(dec.grids.size() == contexts.size(), "grids/contexts mismatch");
    GW_REQUIRE(dec.sky.size() == targets.size(), "decoder targets mismatch");
    const auto dcfg = cfg_.decode_config();
    std::vector<TargetRender<T>> out;
    for (size_t k = 0; k < targets.size(); ++k) {
      std::vector<Var<T>> packed;
      for (size_t i = 0; i < contexts.size(); ++i)
        packed.push_back(splat::decode_to_target_op(
            dec.grids[i], contexts[i].camera, static_cast<T>(contexts[i].time),
            static_cast<T>(targets[k].time), dcfg));
      auto unioned = packed.size() == 1 ? packed[0] : ad::concat(packed, 0);
      auto render = splat::rasterize_op(unioned, targets[k].camera, cfg_.raster,
                                        skipped);
      TargetRender<T> tr;
      tr.rgb = splat::sky_exposure_op(render, dec.sky[k], dec.gain[k], dec.bias[k]);
      tr.depth = ad::slice(render, 0, 3, 1);
      tr.alpha = ad::slice(render, 0, 4, 1);
      out.push_back(std::move(tr));
    }
    return out;
  }

 private:
  static constexpr i64 kTimeFreqs = 64;

  Var<T> embed_time_view(double time, i64 view) const {
    GW_REQUIRE(view >= 0 && view < cfg_.max_views, "view id out of range");
    Tensor<T> sincos =
        nn::sinusoidal_embedding<T>(time, kTimeFreqs, cfg_.max_time * 100.0);
    auto te = time_proj_(ad::reshape(ad::constant(std::move(sincos)), {1, kTimeFreqs}));
    auto ve = ad::take_dim0(view_, {view});
    return ad::add(te, ve);  // [1,D]
  }

  VaeConfig cfg_;
  i64 image_h_ = 0, image_w_ = 0, hp_ = 0, wp_ = 0;
  nn::Conv2d<T> patch_;
  Var<T> pos_, view_, aux_base_;
  nn::Linear<T> time_proj_, grid_head_, sky_head_, exposure_head_;
  std::vector<nn::TransformerBlock<T>> blocks_;
  nn::LayerNorm<T> final_ln_;
};

}  // namespace gw::vae
