// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gaussworld/core/autodiff.hpp"
#include "gaussworld/vae/encoder.hpp"

namespace gw::vae {

/// Multi-scale image-gradient-difference perceptual proxy: mean absolute
/// difference of horizontal/vertical finite differences at 3 dyadic
/// scales. Stands in for a pretrained perceptual loss; pluggable.
template <class T>
Var<T> perceptual_proxy(Var<T> x, Var<T> xhat) {
  GW_REQUIRE(x->value.shape() == xhat->value.shape() && x->value.ndim() == 4,
             "perceptual proxy wants matching [B,3,H,W]");
  Var<T> total;
  int scales = 0;
  for (int s = 0; s < 3; ++s) {
    const i64 H = x->value.dim(2), W = x->value.dim(3);
    if (H < 2 || W < 2) break;
    auto gx = [&](const Var<T>& im, i64 axis) {
      const i64 len = im->value.dim(axis) - 1;
      return ad::sub(ad::slice(im, axis, 1, len), ad::slice(im, axis, 0, len));
    };
    auto dh = ad::mean_all(ad::abs_(ad::sub(gx(x, 3), gx(xhat, 3))));
    auto dv = ad::mean_all(ad::abs_(ad::sub(gx(x, 2), gx(xhat, 2))));
    auto term = ad::add(dh, dv);
    total = scales == 0 ? term : ad::add(total, term);
    ++scales;
    if (H >= 4 && W >= 4) {
      x = ad::avg_pool2d(x, 2);
      xhat = ad::avg_pool2d(xhat, 2);
    } else {
      break;
    }
  }
  return ad::scale(total, T(1) / static_cast<T>(scales));
}

/// L_KL = 0.5 * mean(mu^2 + e^logvar - 1 - logvar); always >= 0.
template <class T>
Var<T> kl_divergence(const PosteriorStats<T>& stats) {
  auto mu2 = ad::square(stats.mean);
  auto term = ad::sub(ad::add(mu2, ad::exp_(stats.logvar)), stats.logvar);
  return ad::scale(ad::add_scalar(ad::mean_all(term), T(-1)), T(0.5));
}

/// Image-branch loss: MSE + w_p * perceptual proxy + w_kl * KL.
/// The adversarial term is intentionally absent.
template <class T>
Var<T> loss_vae(const Var<T>& x, const Var<T>& xhat,
                const PosteriorStats<T>& stats, const VaeConfig& cfg) {
  auto l = ad::mse(xhat, x);
  l = ad::add(l, ad::scale(perceptual_proxy(x, xhat), static_cast<T>(cfg.w_perc)));
  return ad::add(l, ad::scale(kl_divergence(stats), static_cast<T>(cfg.w_kl)));
}

/// Rendering-branch loss: MSE over target renders plus w_d * L1 depth
/// error over pixels with valid (finite) ground-truth depth.
template <class T>
Var<T> loss_storm(const std::vector<Var<T>>& renders_rgb,
                  const std::vector<Tensor<T>>& gt_rgb,
                  const std::vector<Var<T>>& renders_depth,
                  const std::vector<Tensor<T>>& gt_depth,
                  const std::vector<Tensor<T>>& depth_mask,
                  const VaeConfig& cfg) {
  GW_REQUIRE(!renders_rgb.empty(), "loss_storm needs at least one render");
  GW_REQUIRE(renders_rgb.size() == gt_rgb.size() &&
                 renders_depth.size() == gt_depth.size() &&
                 depth_mask.size() == gt_depth.size(),
             "loss_storm input arity mismatch");
  Var<T> rgb_term;
  for (size_t i = 0; i < renders_rgb.size(); ++i) {
    auto t = ad::mse(renders_rgb[i], ad::constant(gt_rgb[i]));
    rgb_term = i == 0 ? t : ad::add(rgb_term, t);
  }
  rgb_term = ad::scale(rgb_term, T(1) / static_cast<T>(renders_rgb.size()));

  double total_count = 0;
  for (const auto& m : depth_mask)
    for (i64 i = 0; i < m.numel(); ++i) total_count += double(m[i]);
  if (total_count == 0) return rgb_term;

  Var<T> depth_sum;
  for (size_t i = 0; i < renders_depth.size(); ++i) {
    // Non-finite ground truth (sky) is masked out; zero it so the masked
    // product cannot produce inf * 0.
    Tensor<T> gt = gt_depth[i];
    for (i64 j = 0; j < gt.numel(); ++j)
      if (!std::isfinite(double(gt[j]))) gt[j] = T(0);
    auto diff = ad::abs_(ad::sub(renders_depth[i], ad::constant(std::move(gt))));
    auto masked = ad::sum_all(ad::mul(diff, ad::constant(depth_mask[i])));
    depth_sum = i == 0 ? masked : ad::add(depth_sum, masked);
  }
  auto depth_term = ad::scale(depth_sum, static_cast<T>(1.0 / total_count));
  return ad::add(rgb_term, ad::scale(depth_term, static_cast<T>(cfg.w_depth)));
}

/// L = L_vae + lambda * L_storm.
template <class T>
Var<T> total_loss(const Var<T>& l_vae, const Var<T>& l_storm, T lambda) {
  return ad::add(l_vae, ad::scale(l_storm, lambda));
}

/// Finite-depth mask (1 where ground truth is finite and positive).
template <class T>
Tensor<T> finite_depth_mask(const Tensor<T>& gt_depth) {
  Tensor<T> m(gt_depth.shape());
  for (i64 i = 0; i < gt_depth.numel(); ++i)
    m[i] = (std::isfinite(double(gt_depth[i])) && gt_depth[i] > T(0)) ? T(1) : T(0);
  return m;
}

/// Random subsampling of a depth mask, emulating sparse range sensors.
template <class T>
Tensor<T> sparsify_mask(const Tensor<T>& mask, double keep_fraction, Rng& rng) {
  Tensor<T> m = mask;
  for (i64 i = 0; i < m.numel(); ++i)
    if (m[i] > T(0) && !rng.bernoulli(keep_fraction)) m[i] = T(0);
  return m;
}

}  // namespace gw::vae
