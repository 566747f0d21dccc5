// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gaussworld/core/nn.hpp"
#include "gaussworld/vae/config.hpp"

namespace gw::vae {

using gw::ad::Var;

template <class T>
struct PosteriorStats {
  Var<T> mean;     // [B,C,h,w]
  Var<T> logvar;   // [B,C,h,w], clamped to [-30, 20]
};

/// Per-image convolutional encoder to posterior statistics. Frames never
/// mix: the batch dimension carries (t, v) flattened.
template <class T>
class ConvEncoder {
 public:
  ConvEncoder() = default;
  ConvEncoder(nn::ParamStore<T>& ps, const std::string& name,
              const VaeConfig& cfg)
      : cfg_(cfg) {
    const i64 b = cfg.base_channels;
    const i64 n_down = cfg.downsample == 4 ? 2 : 3;
    i64 cin = 3;
    i64 cout = b;
    i64 idx = 0;
    stem_ = nn::Conv2d<T>(ps, name + ".stem", cin, b, 3, 1, 1);
    stem_norm_ = nn::GroupNorm<T>(ps, name + ".stem_norm", b, cfg.norm_groups);
    cin = b;
    for (i64 d = 0; d < n_down; ++d) {
      cout = cin * 2;
      down_.push_back(nn::Conv2d<T>(ps, name + ".down" + std::to_string(idx),
                                    cin, cout, 3, 2, 1));
      down_norm_.push_back(nn::GroupNorm<T>(
          ps, name + ".down_norm" + std::to_string(idx), cout, cfg.norm_groups));
      cin = cout;
      ++idx;
    }
    mid_ = nn::Conv2d<T>(ps, name + ".mid", cin, cin, 3, 1, 1);
    mid_norm_ = nn::GroupNorm<T>(ps, name + ".mid_norm", cin, cfg.norm_groups);
    head_ = nn::Conv2d<T>(ps, name + ".head", cin, 2 * cfg.latent_channels, 3, 1, 1);
    // Start near-deterministic: the rendering branch would otherwise see
    // unit-scale posterior noise for its first few hundred steps.
    for (i64 c = 0; c < cfg.latent_channels; ++c)
      head_.b->value[cfg.latent_channels + c] = static_cast<T>(cfg.logvar_bias_init);
  }

  PosteriorStats<T> operator()(const Var<T>& images) const {
    GW_REQUIRE(images->value.ndim() == 4 && images->value.dim(1) == 3,
               "encoder wants [B,3,H,W]");
    auto x = ad::silu(stem_norm_(stem_(images)));
    for (size_t i = 0; i < down_.size(); ++i)
      x = ad::silu(down_norm_[i](down_[i](x)));
    x = ad::silu(mid_norm_(mid_(x)));
    auto stats = head_(x);
    const i64 c = cfg_.latent_channels;
    PosteriorStats<T> out;
    out.mean = ad::slice(stats, 1, 0, c);
    out.logvar = ad::clamp(ad::slice(stats, 1, c, c), T(-30), T(20));
    return out;
  }

 private:
  VaeConfig cfg_;
  nn::Conv2d<T> stem_, mid_, head_;
  nn::GroupNorm<T> stem_norm_, mid_norm_;
  std::vector<nn::Conv2d<T>> down_;
  std::vector<nn::GroupNorm<T>> down_norm_;
};

/// z = mean + exp(logvar/2) * eta with seeded unit-normal eta.
template <class T>
Var<T> reparameterize(const PosteriorStats<T>& stats, Rng& rng) {
  Tensor<T> eta = Tensor<T>::randn(stats.mean->value.shape(), rng);
  auto sigma = ad::exp_(ad::scale(stats.logvar, T(0.5)));
  return ad::add(stats.mean, ad::mul(sigma, ad::constant(std::move(eta))));
}

}  // namespace gw::vae
