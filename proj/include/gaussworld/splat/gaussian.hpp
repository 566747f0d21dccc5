// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gaussworld/core/tensor.hpp"
#include "gaussworld/geom/camera.hpp"

namespace gw::splat {

/// Bounds applied to decoded Gaussian scales (meters).
struct ScaleBounds {
  double s_min = 1e-3;
  double s_max = 50.0;
};

/// A batch of 3-D Gaussians with per-primitive constant velocity and a
/// source timestamp, stored as structure-of-arrays.
template <class T>
struct GaussianSet {
  Tensor<T> positions;     // [N,3] centers, world frame
  Tensor<T> rotations;     // [N,4] unit quaternions (w,x,y,z)
  Tensor<T> scales;        // [N,3] per-axis stddev, meters
  Tensor<T> opacities;     // [N] in (0,1)
  Tensor<T> colors;        // [N,3] in [0,1]
  Tensor<T> velocities;    // [N,3] m/s
  Tensor<T> source_times;  // [N] seconds

  i64 size() const { return positions.empty() ? 0 : positions.dim(0); }

  static GaussianSet empty() {
    GaussianSet g;
    g.positions = Tensor<T>(Shape{0, 3});
    g.rotations = Tensor<T>(Shape{0, 4});
    g.scales = Tensor<T>(Shape{0, 3});
    g.opacities = Tensor<T>(Shape{0});
    g.colors = Tensor<T>(Shape{0, 3});
    g.velocities = Tensor<T>(Shape{0, 3});
    g.source_times = Tensor<T>(Shape{0});
    return g;
  }

  void validate(const ScaleBounds& bounds = {}) const {
    const i64 n = size();
    for (i64 i = 0; i < n; ++i) {
      const T* q = rotations.data() + i * 4;
      const double qn = std::sqrt(double(q[0]) * q[0] + double(q[1]) * q[1] +
                                  double(q[2]) * q[2] + double(q[3]) * q[3]);
      GW_REQUIRE(std::abs(qn - 1.0) < 1e-5, "gaussian quaternion not unit");
      for (int k = 0; k < 3; ++k) {
        const double s = double(scales[i * 3 + k]);
        GW_REQUIRE(s >= bounds.s_min - 1e-9 && s <= bounds.s_max + 1e-9,
                   "gaussian scale out of bounds");
      }
      GW_REQUIRE(opacities[i] > T(0) && opacities[i] < T(1),
                 "gaussian opacity out of (0,1)");
    }
    GW_REQUIRE(positions.all_finite() && rotations.all_finite() &&
                   scales.all_finite() && colors.all_finite() &&
                   velocities.all_finite(),
               "gaussian fields must be finite");
  }
};

/// Moves every Gaussian along its velocity to time t_prime; all other
/// fields are preserved, source_times become t_prime. Composing transports
/// is exactly equivalent to a single transport to the final time.
template <class T>
GaussianSet<T> transport(const GaussianSet<T>& g, T t_prime) {
  GW_REQUIRE(std::isfinite(double(t_prime)), "transport time must be finite");
  GaussianSet<T> out = g;
  const i64 n = g.size();
  for (i64 i = 0; i < n; ++i) {
    const T dt = t_prime - g.source_times[i];
    for (int k = 0; k < 3; ++k)
      out.positions[i * 3 + k] =
          g.positions[i * 3 + k] + g.velocities[i * 3 + k] * dt;
    out.source_times[i] = t_prime;
  }
  return out;
}

/// Concatenates sets (used to union transported context Gaussians).
template <class T>
GaussianSet<T> merge(const std::vector<GaussianSet<T>>& sets) {
  GaussianSet<T> out = GaussianSet<T>::empty();
  i64 total = 0;
  for (const auto& s : sets) total += s.size();
  out.positions = Tensor<T>(Shape{total, 3});
  out.rotations = Tensor<T>(Shape{total, 4});
  out.scales = Tensor<T>(Shape{total, 3});
  out.opacities = Tensor<T>(Shape{total});
  out.colors = Tensor<T>(Shape{total, 3});
  out.velocities = Tensor<T>(Shape{total, 3});
  out.source_times = Tensor<T>(Shape{total});
  i64 off = 0;
  for (const auto& s : sets) {
    const i64 n = s.size();
    std::copy_n(s.positions.data(), n * 3, out.positions.data() + off * 3);
    std::copy_n(s.rotations.data(), n * 4, out.rotations.data() + off * 4);
    std::copy_n(s.scales.data(), n * 3, out.scales.data() + off * 3);
    std::copy_n(s.opacities.data(), n, out.opacities.data() + off);
    std::copy_n(s.colors.data(), n * 3, out.colors.data() + off * 3);
    std::copy_n(s.velocities.data(), n * 3, out.velocities.data() + off * 3);
    std::copy_n(s.source_times.data(), n, out.source_times.data() + off);
    off += n;
  }
  return out;
}

}  // namespace gw::splat
