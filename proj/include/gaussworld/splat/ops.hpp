// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gaussworld/core/autodiff.hpp"
#include "gaussworld/splat/decode.hpp"
#include "gaussworld/splat/rasterize.hpp"

namespace gw::splat {

using gw::ad::Var;

// Autodiff bridges. Gaussian parameter rows are packed as
// [N,14]: pos(0..2) quat(3..6) scale(7..9) opacity(10) color(11..13).
constexpr i64 kPackedWidth = 14;

/// decode_raw + transport-to-target as one differentiable op:
/// combined grid [15,H,W] -> packed Gaussians [N,14] positioned at
/// target_time. Velocity gradients flow through the transport shift.
template <class T>
Var<T> decode_to_target_op(const Var<T>& combined, const CameraModel& cam,
                           T source_time, T target_time,
                           const DecodeConfig& cfg) {
  GaussianSet<T> set = decode_raw(combined->value, cam, source_time, cfg);
  GaussianSet<T> moved = transport(set, target_time);
  const i64 n = set.size();
  Tensor<T> packed(Shape{n, kPackedWidth});
  for (i64 i = 0; i < n; ++i) {
    T* row = packed.data() + i * kPackedWidth;
    for (int k = 0; k < 3; ++k) row[k] = moved.positions[i * 3 + k];
    for (int k = 0; k < 4; ++k) row[3 + k] = moved.rotations[i * 4 + k];
    for (int k = 0; k < 3; ++k) row[7 + k] = moved.scales[i * 3 + k];
    row[10] = moved.opacities[i];
    for (int k = 0; k < 3; ++k) row[11 + k] = moved.colors[i * 3 + k];
  }
  return ad::make_op<T>(
      std::move(packed), {combined},
      [cam, source_time, target_time, cfg, n](ad::Node<T>& self) {
        Tensor<T> gp(Shape{n, 3}), gq(Shape{n, 4}), gs(Shape{n, 3});
        Tensor<T> go(Shape{n}), gc(Shape{n, 3});
        for (i64 i = 0; i < n; ++i) {
          const T* row = self.grad.data() + i * kPackedWidth;
          for (int k = 0; k < 3; ++k) gp[i * 3 + k] = row[k];
          for (int k = 0; k < 4; ++k) gq[i * 4 + k] = row[3 + k];
          for (int k = 0; k < 3; ++k) gs[i * 3 + k] = row[7 + k];
          go[i] = row[10];
          for (int k = 0; k < 3; ++k) gc[i * 3 + k] = row[11 + k];
        }
        decode_transport_backward(self.inputs[0]->value, cam, source_time,
                                  target_time, cfg, gp, gq, gs, go, gc,
                                  ad::grad_of(self.inputs[0]));
      });
}

namespace detail {

template <class T>
GaussianSet<T> unpack(const Tensor<T>& packed) {
  const i64 n = packed.dim(0);
  GaussianSet<T> g = GaussianSet<T>::empty();
  g.positions = Tensor<T>(Shape{n, 3});
  g.rotations = Tensor<T>(Shape{n, 4});
  g.scales = Tensor<T>(Shape{n, 3});
  g.opacities = Tensor<T>(Shape{n});
  g.colors = Tensor<T>(Shape{n, 3});
  g.velocities = Tensor<T>(Shape{n, 3});
  g.source_times = Tensor<T>(Shape{n});
  for (i64 i = 0; i < n; ++i) {
    const T* row = packed.data() + i * kPackedWidth;
    for (int k = 0; k < 3; ++k) g.positions[i * 3 + k] = row[k];
    for (int k = 0; k < 4; ++k) g.rotations[i * 4 + k] = row[3 + k];
    for (int k = 0; k < 3; ++k) g.scales[i * 3 + k] = row[7 + k];
    g.opacities[i] = row[10];
    for (int k = 0; k < 3; ++k) g.colors[i * 3 + k] = row[11 + k];
  }
  return g;
}

}  // namespace detail

/// Differentiable tiled rasterization of packed Gaussians [N,14] into a
/// [5,H,W] tensor (rgb, depth, alpha stacked along channels).
template <class T>
Var<T> rasterize_op(const Var<T>& packed, const CameraModel& cam,
                    const RasterizeConfig& cfg,
                    i64* skipped_counter = nullptr) {
  GW_REQUIRE(packed->value.ndim() == 2 &&
                 packed->value.dim(1) == kPackedWidth,
             "rasterize_op wants [N,14]");
  auto set = std::make_shared<GaussianSet<T>>(detail::unpack(packed->value));
  auto cache = std::make_shared<splat::detail::ProjectionCache<T>>();
  RenderOutput<T> out = rasterize(*set, cam, cfg, cache.get());
  if (skipped_counter) *skipped_counter += out.skipped_degenerate;
  const i64 H = cam.height, W = cam.width;
  Tensor<T> stacked(Shape{5, H, W});
  for (i64 p = 0; p < H * W; ++p) {
    stacked[0 * H * W + p] = out.rgb[p * 3 + 0];
    stacked[1 * H * W + p] = out.rgb[p * 3 + 1];
    stacked[2 * H * W + p] = out.rgb[p * 3 + 2];
    stacked[3 * H * W + p] = out.depth[p];
    stacked[4 * H * W + p] = out.alpha[p];
  }
  return ad::make_op<T>(
      std::move(stacked), {packed}, [set, cache, cam, cfg, H, W](ad::Node<T>& self) {
        const i64 n = set->size();
        Tensor<T> grgb(Shape{H, W, 3}), gdep(Shape{H, W}), galp(Shape{H, W});
        for (i64 p = 0; p < H * W; ++p) {
          grgb[p * 3 + 0] = self.grad[0 * H * W + p];
          grgb[p * 3 + 1] = self.grad[1 * H * W + p];
          grgb[p * 3 + 2] = self.grad[2 * H * W + p];
          gdep[p] = self.grad[3 * H * W + p];
          galp[p] = self.grad[4 * H * W + p];
        }
        Tensor<T> gp(Shape{n, 3}), gq(Shape{n, 4}), gs(Shape{n, 3});
        Tensor<T> go(Shape{n}), gc(Shape{n, 3});
        rasterize_backward(*set, cam, cfg, *cache, grgb, gdep, galp, gp, gq,
                           gs, go, gc);
        auto& gin = ad::grad_of(self.inputs[0]);
        for (i64 i = 0; i < n; ++i) {
          T* row = gin.data() + i * kPackedWidth;
          for (int k = 0; k < 3; ++k) row[k] += gp[i * 3 + k];
          for (int k = 0; k < 4; ++k) row[3 + k] += gq[i * 4 + k];
          for (int k = 0; k < 3; ++k) row[7 + k] += gs[i * 3 + k];
          row[10] += go[i];
          for (int k = 0; k < 3; ++k) row[11 + k] += gc[i * 3 + k];
        }
      });
}

/// Sky compositing + exposure in graph form.
/// render: [5,H,W]; sky: [3]; gain/bias: [1]. Returns rgb [3,H,W].
template <class T>
Var<T> sky_exposure_op(const Var<T>& render, const Var<T>& sky,
                       const Var<T>& gain, const Var<T>& bias) {
  const i64 H = render->value.dim(1), W = render->value.dim(2);
  auto rgb = ad::slice(render, 0, 0, 3);
  auto alpha = ad::slice(render, 0, 4, 1);  // [1,H,W]
  auto one_minus_a = ad::add_scalar(ad::neg(alpha), T(1));
  auto sky_col = ad::reshape(sky, {3, 1, 1});
  auto blended = ad::add(rgb, ad::mul(one_minus_a, sky_col));
  auto gain3 = ad::reshape(gain, {1, 1, 1});
  auto bias3 = ad::reshape(bias, {1, 1, 1});
  auto exposed = ad::add(ad::mul(blended, gain3), bias3);
  (void)H;
  (void)W;
  return ad::clamp(exposed, T(0), T(1));
}

}  // namespace gw::splat
