// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gaussworld/core/nn.hpp"
#include "gaussworld/vae/config.hpp"

namespace gw::vae {

/// Per-frame convolutional decoder mirroring the encoder: nearest-neighbor
/// upsampling by f with a sigmoid output in [0,1].
template <class T>
class ImageDecoder {
 public:
  ImageDecoder() = default;
  ImageDecoder(nn::ParamStore<T>& ps, const std::string& name,
               const VaeConfig& cfg) {
    const i64 n_up = cfg.downsample == 4 ? 2 : 3;
    i64 cin = cfg.base_channels << n_up;
    stem_ = nn::Conv2d<T>(ps, name + ".stem", cfg.latent_channels, cin, 3, 1, 1);
    stem_norm_ = nn::GroupNorm<T>(ps, name + ".stem_norm", cin, cfg.norm_groups);
    for (i64 d = 0; d < n_up; ++d) {
      const i64 cout = cin / 2;
      up_.push_back(nn::Conv2d<T>(ps, name + ".up" + std::to_string(d), cin,
                                  cout, 3, 1, 1));
      up_norm_.push_back(nn::GroupNorm<T>(
          ps, name + ".up_norm" + std::to_string(d), cout, cfg.norm_groups));
      cin = cout;
    }
    head_ = nn::Conv2d<T>(ps, name + ".head", cin, 3, 3, 1, 1);
  }

  ad::Var<T> operator()(const ad::Var<T>& z) const {
    GW_REQUIRE(z->value.ndim() == 4, "image decoder wants [B,C,h,w]");
    auto x = ad::silu(stem_norm_(stem_(z)));
    for (size_t i = 0; i < up_.size(); ++i)
      x = ad::silu(up_norm_[i](up_[i](ad::upsample_nearest2(x))));
    return ad::sigmoid(head_(x));
  }

 private:
  nn::Conv2d<T> stem_, head_;
  nn::GroupNorm<T> stem_norm_;
  std::vector<nn::Conv2d<T>> up_;
  std::vector<nn::GroupNorm<T>> up_norm_;
};

}  // namespace gw::vae
