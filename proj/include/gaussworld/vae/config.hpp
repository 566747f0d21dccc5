// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gaussworld/core/common.hpp"
#include "gaussworld/splat/decode.hpp"
#include "gaussworld/splat/rasterize.hpp"

namespace gw::vae {

struct VaeConfig {
  i64 latent_channels = 8;  // C
  i64 downsample = 4;       // f
  i64 base_channels = 32;   // encoder/decoder conv width
  i64 norm_groups = 8;

  // Gaussian-splatting decoder (transformer over context-latent patches)
  i64 gs_layers = 6;
  i64 gs_width = 256;
  i64 gs_heads = 8;
  i64 patch = 2;
  i64 max_views = 6;
  double max_time = 16.0;  // sinusoidal time-embedding period scale

  // decode activations
  double near = 0.5;
  double far = 60.0;
  double scale_bias_init = 0.0;    // ln(meters); trainer sets from intrinsics
  double opacity_bias_init = 1.0;  // sigmoid(1) ~ 0.73
  double depth_bias_init = -1.4;   // decoded prior ~ 12 m mid-range
  double logvar_bias_init = -6.0;  // near-deterministic posterior at init
  bool isotropic_scale = false;

  // losses
  double w_perc = 0.1;
  double w_kl = 1e-6;
  double w_depth = 0.05;
  double lambda_storm = 0.5;

  // rendering during training/eval
  splat::RasterizeConfig raster;

  void validate() const {
    GW_REQUIRE(downsample == 4 || downsample == 8, "downsample factor f must be 4 or 8");
    GW_REQUIRE(latent_channels == 4 || latent_channels == 8 || latent_channels == 16,
               "latent channel count must be 4, 8, or 16");
    GW_REQUIRE(gs_width % gs_heads == 0, "gs decoder width % heads != 0");
  }

  splat::DecodeConfig decode_config() const {
    splat::DecodeConfig d;
    d.near = near;
    d.far = far;
    d.isotropic_scale = isotropic_scale;
    return d;
  }
};

}  // namespace gw::vae
