// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <vector>

#include "gaussworld/core/tensor.hpp"
#include "gaussworld/synth/scene.hpp"

namespace gw::synth {

struct BoxAnnotation {
  Vec3 center;
  Vec3 size;  // full extents
  double yaw = 0.0;
  int class_id = 0;
};

constexpr int kNumClasses = 2;
constexpr double kLaneStrokePx = 1.5;

/// Tight 3-D box around a primitive at time t (cube for spheres).
inline BoxAnnotation box_for_primitive(const Primitive& p, double t) {
  BoxAnnotation b;
  b.center = p.center_at(t);
  b.size = p.bound_half() * 2.0;
  b.yaw = 0.0;
  b.class_id = p.class_id;
  return b;
}

namespace detail {

/// 2-D convex hull (monotone chain). Points are (u, v) pixel coordinates.
inline std::vector<std::pair<double, double>> convex_hull(
    std::vector<std::pair<double, double>> pts) {
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  const size_t n = pts.size();
  if (n < 3) return pts;
  auto cross = [](const std::pair<double, double>& o,
                  const std::pair<double, double>& a,
                  const std::pair<double, double>& b) {
    return (a.first - o.first) * (b.second - o.second) -
           (a.second - o.second) * (b.first - o.first);
  };
  std::vector<std::pair<double, double>> hull(2 * n);
  size_t k = 0;
  for (size_t i = 0; i < n; ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  const size_t lower = k + 1;
  for (size_t i = n - 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

inline bool point_in_hull(const std::vector<std::pair<double, double>>& hull,
                          double px, double py) {
  const size_t n = hull.size();
  if (n < 3) return false;
  for (size_t i = 0; i < n; ++i) {
    const auto& a = hull[i];
    const auto& b = hull[(i + 1) % n];
    const double c = (b.first - a.first) * (py - a.second) -
                     (b.second - a.second) * (px - a.first);
    if (c < -1e-12) return false;  // hull is counterclockwise
  }
  return true;
}

inline void fill_hull(Tensor<float>& raster,
                      const std::vector<std::pair<double, double>>& hull,
                      float intensity) {
  if (hull.size() < 3) return;
  const i64 H = raster.dim(0), W = raster.dim(1);
  double u0 = hull[0].first, u1 = u0, v0 = hull[0].second, v1 = v0;
  for (const auto& p : hull) {
    u0 = std::min(u0, p.first);
    u1 = std::max(u1, p.first);
    v0 = std::min(v0, p.second);
    v1 = std::max(v1, p.second);
  }
  const i64 x0 = std::max<i64>(0, i64(std::floor(u0)));
  const i64 x1 = std::min<i64>(W - 1, i64(std::ceil(u1)));
  const i64 y0 = std::max<i64>(0, i64(std::floor(v0)));
  const i64 y1 = std::min<i64>(H - 1, i64(std::ceil(v1)));
  for (i64 y = y0; y <= y1; ++y)
    for (i64 x = x0; x <= x1; ++x)
      if (point_in_hull(hull, double(x), double(y)))
        raster[y * W + x] = std::max(raster[y * W + x], intensity);
}

}  // namespace detail

/// Minimum camera-space depth used when projecting geometry that straddles
/// the camera plane.
constexpr double kConditionZClip = 0.05;

/// Rasterizes box silhouettes (per-class intensity) and lane polylines
/// (fixed stroke) for one camera. Boxes fully behind the camera are
/// skipped silently; partially-behind corners are clamped to a near plane.
inline void rasterize_conditions(const std::vector<BoxAnnotation>& boxes,
                                 const std::vector<LanePolyline>& lanes,
                                 const CameraModel& cam,
                                 Tensor<float>& box_raster,
                                 Tensor<float>& lane_raster) {
  cam.validate();
  const i64 H = cam.height, W = cam.width;
  box_raster = Tensor<float>(Shape{H, W});
  lane_raster = Tensor<float>(Shape{H, W});
  const Mat3 r = cam.rot_matrix();

  for (const auto& box : boxes) {
    const double cy_ = std::cos(box.yaw), sy = std::sin(box.yaw);
    std::vector<std::pair<double, double>> pts;
    bool any_front = false;
    for (int corner = 0; corner < 8; ++corner) {
      const double dx = (corner & 1 ? 0.5 : -0.5) * box.size.x;
      const double dy = (corner & 2 ? 0.5 : -0.5) * box.size.y;
      const double dz = (corner & 4 ? 0.5 : -0.5) * box.size.z;
      const Vec3 world = box.center + Vec3{cy_ * dx - sy * dy, sy * dx + cy_ * dy, dz};
      Vec3 pc = r * world + cam.translation;
      if (pc.z > kConditionZClip) any_front = true;
      pc.z = std::max(pc.z, kConditionZClip);
      pts.push_back({cam.fx * pc.x / pc.z + cam.cx, cam.fy * pc.y / pc.z + cam.cy});
    }
    if (!any_front) continue;  // fully behind: skip silently
    const float intensity = float(box.class_id + 1) / float(kNumClasses);
    detail::fill_hull(box_raster, detail::convex_hull(std::move(pts)), intensity);
  }

  for (const auto& lane : lanes) {
    for (size_t i = 0; i + 1 < lane.points.size(); ++i) {
      Vec3 a = r * lane.points[i] + cam.translation;
      Vec3 b = r * lane.points[i + 1] + cam.translation;
      if (a.z <= kConditionZClip && b.z <= kConditionZClip) continue;
      // Clip the segment to the near plane in camera space.
      if (a.z < kConditionZClip) {
        const double s = (kConditionZClip - a.z) / (b.z - a.z);
        a = a + (b - a) * s;
      } else if (b.z < kConditionZClip) {
        const double s = (kConditionZClip - b.z) / (a.z - b.z);
        b = b + (a - b) * s;
      }
      const double au = cam.fx * a.x / a.z + cam.cx, av = cam.fy * a.y / a.z + cam.cy;
      const double bu = cam.fx * b.x / b.z + cam.cx, bv = cam.fy * b.y / b.z + cam.cy;
      const double half = kLaneStrokePx * 0.5;
      const i64 x0 = std::max<i64>(0, i64(std::floor(std::min(au, bu) - half)));
      const i64 x1 = std::min<i64>(W - 1, i64(std::ceil(std::max(au, bu) + half)));
      const i64 y0 = std::max<i64>(0, i64(std::floor(std::min(av, bv) - half)));
      const i64 y1 = std::min<i64>(H - 1, i64(std::ceil(std::max(av, bv) + half)));
      const double dx = bu - au, dy = bv - av;
      const double len2 = dx * dx + dy * dy;
      for (i64 y = y0; y <= y1; ++y)
        for (i64 x = x0; x <= x1; ++x) {
          double tproj = len2 > 1e-12
                             ? ((double(x) - au) * dx + (double(y) - av) * dy) / len2
                             : 0.0;
          tproj = std::clamp(tproj, 0.0, 1.0);
          const double qx = au + tproj * dx - double(x);
          const double qy = av + tproj * dy - double(y);
          if (qx * qx + qy * qy <= half * half) lane_raster[y * W + x] = 1.0f;
        }
    }
  }
}

}  // namespace gw::synth
