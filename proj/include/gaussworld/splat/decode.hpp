// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <sstream>

#include "gaussworld/splat/gaussian.hpp"

namespace gw::splat {

// Raw channel layout (channel-first [15,H,W]):
//   0      depth (pre-sigmoid, mapped to [near, far])
//   1..4   quaternion (normalized on decode)
//   5..7   per-axis log-scale (exp, clamped to scale bounds); in
//          isotropic mode channel 5 is shared and 6..7 are padding
//   8      opacity (sigmoid)
//   9..11  color (sigmoid)
//   12..14 velocity (verbatim, m/s)
constexpr i64 kRawChannels = 12;
constexpr i64 kVelocityChannels = 3;
constexpr i64 kGridChannels = kRawChannels + kVelocityChannels;

struct DecodeConfig {
  double near = 0.5;
  double far = 60.0;
  ScaleBounds bounds;
  bool isotropic_scale = false;  // scalar-scale reading of the channel layout
};

/// Per-pixel raw Gaussian channels predicted for one context frame-view.
template <class T>
struct PixelGaussianGrid {
  Tensor<T> raw;       // [12,H,W]
  Tensor<T> velocity;  // [3,H,W]
  CameraModel camera;
  T time = T(0);

  i64 height() const { return raw.dim(1); }
  i64 width() const { return raw.dim(2); }

  /// Combined [15,H,W] view used by the trainable decoder head.
  Tensor<T> combined() const {
    Tensor<T> out(Shape{kGridChannels, raw.dim(1), raw.dim(2)});
    std::copy_n(raw.data(), raw.numel(), out.data());
    std::copy_n(velocity.data(), velocity.numel(), out.data() + raw.numel());
    return out;
  }

  static PixelGaussianGrid from_combined(const Tensor<T>& all,
                                         const CameraModel& cam, T time) {
    GW_REQUIRE(all.ndim() == 3 && all.dim(0) == kGridChannels,
               "grid wants [15,H,W]");
    PixelGaussianGrid g;
    const i64 hw = all.dim(1) * all.dim(2);
    g.raw = Tensor<T>(Shape{kRawChannels, all.dim(1), all.dim(2)});
    g.velocity = Tensor<T>(Shape{kVelocityChannels, all.dim(1), all.dim(2)});
    std::copy_n(all.data(), kRawChannels * hw, g.raw.data());
    std::copy_n(all.data() + kRawChannels * hw, kVelocityChannels * hw,
                g.velocity.data());
    g.camera = cam;
    g.time = time;
    return g;
  }
};

namespace detail {

template <class T>
inline T sigm(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace detail

/// Decodes one Gaussian per pixel: the center sits on the pixel's camera
/// ray at a sigmoid-bounded depth, so the raw grid only carries depth.
/// Velocity channels pass through verbatim.
template <class T>
GaussianSet<T> decode_raw(const Tensor<T>& combined, const CameraModel& cam,
                          T source_time, const DecodeConfig& cfg = {}) {
  GW_REQUIRE(combined.ndim() == 3 && combined.dim(0) == kGridChannels,
             "decode_raw wants [15,H,W]");
  const i64 H = combined.dim(1), W = combined.dim(2);
  GW_REQUIRE(H == cam.height && W == cam.width,
             "grid shape mismatches camera image size");
  const i64 n = H * W;
  for (i64 i = 0; i < combined.numel(); ++i)
    if (!std::isfinite(double(combined[i]))) {
      std::ostringstream os;
      os << "decode_raw: non-finite raw value at pixel ("
         << (i % n) % W << "," << (i % n) / W << ") channel " << i / n;
      fail(os.str());
    }

  GaussianSet<T> out;
  out.positions = Tensor<T>(Shape{n, 3});
  out.rotations = Tensor<T>(Shape{n, 4});
  out.scales = Tensor<T>(Shape{n, 3});
  out.opacities = Tensor<T>(Shape{n});
  out.colors = Tensor<T>(Shape{n, 3});
  out.velocities = Tensor<T>(Shape{n, 3});
  out.source_times = Tensor<T>(Shape{n}, source_time);

  const Vec3 origin = cam.center();
  const Mat3 r_cw = cam.rot_matrix().transposed();
  const T near = static_cast<T>(cfg.near), far = static_cast<T>(cfg.far);
  const T smin = static_cast<T>(cfg.bounds.s_min);
  const T smax = static_cast<T>(cfg.bounds.s_max);
  const T* ch = combined.data();

  for (i64 p = 0; p < n; ++p) {
    const i64 px = p % W, py = p / W;
    const Vec3 dc{(double(px) - cam.cx) / cam.fx, (double(py) - cam.cy) / cam.fy, 1.0};
    const Vec3 dir = (r_cw * dc).normalized();
    const T d = near + (far - near) * detail::sigm(ch[0 * n + p]);
    out.positions[p * 3 + 0] = static_cast<T>(origin.x) + d * static_cast<T>(dir.x);
    out.positions[p * 3 + 1] = static_cast<T>(origin.y) + d * static_cast<T>(dir.y);
    out.positions[p * 3 + 2] = static_cast<T>(origin.z) + d * static_cast<T>(dir.z);
    const T qw = ch[1 * n + p], qx = ch[2 * n + p], qy = ch[3 * n + p],
            qz = ch[4 * n + p];
    const T qn = std::sqrt(qw * qw + qx * qx + qy * qy + qz * qz);
    GW_REQUIRE(qn > T(1e-12), "decode_raw: zero quaternion");
    out.rotations[p * 4 + 0] = qw / qn;
    out.rotations[p * 4 + 1] = qx / qn;
    out.rotations[p * 4 + 2] = qy / qn;
    out.rotations[p * 4 + 3] = qz / qn;
    for (int k = 0; k < 3; ++k) {
      const T raw_s = cfg.isotropic_scale ? ch[5 * n + p] : ch[(5 + k) * n + p];
      out.scales[p * 3 + k] = std::clamp(std::exp(raw_s), smin, smax);
    }
    out.opacities[p] = detail::sigm(ch[8 * n + p]);
    for (int k = 0; k < 3; ++k)
      out.colors[p * 3 + k] = detail::sigm(ch[(9 + k) * n + p]);
    for (int k = 0; k < 3; ++k)
      out.velocities[p * 3 + k] = ch[(12 + k) * n + p];
  }
  return out;
}

template <class T>
GaussianSet<T> decode_raw(const PixelGaussianGrid<T>& grid,
                          const DecodeConfig& cfg = {}) {
  return decode_raw(grid.combined(), grid.camera, grid.time, cfg);
}

/// Backward of decode_raw composed with a transport to a target time:
/// given gradients on the decoded-and-transported set, accumulates into
/// d_combined [15,H,W].
template <class T>
void decode_transport_backward(const Tensor<T>& combined, const CameraModel& cam,
                               T source_time, T target_time,
                               const DecodeConfig& cfg, const Tensor<T>& g_pos,
                               const Tensor<T>& g_quat, const Tensor<T>& g_scale,
                               const Tensor<T>& g_op, const Tensor<T>& g_color,
                               Tensor<T>& d_combined) {
  const i64 H = combined.dim(1), W = combined.dim(2);
  const i64 n = H * W;
  const Vec3 origin_d = cam.center();
  (void)origin_d;
  const Mat3 r_cw = cam.rot_matrix().transposed();
  const T near = static_cast<T>(cfg.near), far = static_cast<T>(cfg.far);
  const T smin = static_cast<T>(cfg.bounds.s_min);
  const T smax = static_cast<T>(cfg.bounds.s_max);
  const T dt = target_time - source_time;
  const T* ch = combined.data();
  T* out = d_combined.data();

  for (i64 p = 0; p < n; ++p) {
    const i64 px = p % W, py = p / W;
    const Vec3 dc{(double(px) - cam.cx) / cam.fx, (double(py) - cam.cy) / cam.fy, 1.0};
    const Vec3 dir = (r_cw * dc).normalized();
    // depth: mu = origin + d * dir (transport does not involve d)
    const T gp[3] = {g_pos[p * 3], g_pos[p * 3 + 1], g_pos[p * 3 + 2]};
    const T dd = gp[0] * static_cast<T>(dir.x) + gp[1] * static_cast<T>(dir.y) +
                 gp[2] * static_cast<T>(dir.z);
    const T sg = detail::sigm(ch[0 * n + p]);
    out[0 * n + p] += dd * (far - near) * sg * (T(1) - sg);
    // quaternion normalization
    const T qw = ch[1 * n + p], qx = ch[2 * n + p], qy = ch[3 * n + p],
            qz = ch[4 * n + p];
    const T qn = std::sqrt(qw * qw + qx * qx + qy * qy + qz * qz);
    const T u[4] = {qw / qn, qx / qn, qy / qn, qz / qn};
    const T gq[4] = {g_quat[p * 4], g_quat[p * 4 + 1], g_quat[p * 4 + 2],
                     g_quat[p * 4 + 3]};
    const T dot = gq[0] * u[0] + gq[1] * u[1] + gq[2] * u[2] + gq[3] * u[3];
    for (int k = 0; k < 4; ++k)
      out[(1 + k) * n + p] += (gq[k] - dot * u[k]) / qn;
    // scale: exp then clamp
    for (int k = 0; k < 3; ++k) {
      const i64 src = cfg.isotropic_scale ? 5 : 5 + k;
      const T s = std::exp(ch[src * n + p]);
      if (s > smin && s < smax) out[src * n + p] += g_scale[p * 3 + k] * s;
    }
    // opacity / color sigmoids
    const T so = detail::sigm(ch[8 * n + p]);
    out[8 * n + p] += g_op[p] * so * (T(1) - so);
    for (int k = 0; k < 3; ++k) {
      const T sc = detail::sigm(ch[(9 + k) * n + p]);
      out[(9 + k) * n + p] += g_color[p * 3 + k] * sc * (T(1) - sc);
    }
    // velocity: position shifted by v * dt during transport
    for (int k = 0; k < 3; ++k) out[(12 + k) * n + p] += gp[k] * dt;
  }
}

}  // namespace gw::splat
