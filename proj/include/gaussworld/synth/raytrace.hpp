// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <limits>

#include "gaussworld/core/tensor.hpp"
#include "gaussworld/core/threading.hpp"
#include "gaussworld/synth/scene.hpp"

namespace gw::synth {

/// Hit ids: >= 0 primitive index, kHitGround, kHitSky.
constexpr int kHitGround = -2;
constexpr int kHitSky = -1;

namespace detail {

inline bool intersect_sphere(const Vec3& o, const Vec3& d, const Vec3& c,
                             double r, double& s, Vec3& normal) {
  const Vec3 oc = o - c;
  const double b = d.dot(oc);
  const double q = oc.dot(oc) - r * r;
  const double disc = b * b - q;
  if (disc < 0) return false;
  const double sq = std::sqrt(disc);
  double t = -b - sq;
  if (t < 1e-6) t = -b + sq;
  if (t < 1e-6) return false;
  s = t;
  normal = (o + d * t - c) / r;
  return true;
}

inline bool intersect_aab(const Vec3& o, const Vec3& d, const Vec3& c,
                          const Vec3& h, double& s, Vec3& normal) {
  double tmin = -std::numeric_limits<double>::infinity();
  double tmax = std::numeric_limits<double>::infinity();
  int axis_min = 0;
  for (int a = 0; a < 3; ++a) {
    const double da = a == 0 ? d.x : (a == 1 ? d.y : d.z);
    const double oa = a == 0 ? o.x : (a == 1 ? o.y : o.z);
    const double ca = a == 0 ? c.x : (a == 1 ? c.y : c.z);
    const double ha = a == 0 ? h.x : (a == 1 ? h.y : h.z);
    if (std::abs(da) < 1e-12) {
      if (oa < ca - ha || oa > ca + ha) return false;
      continue;
    }
    double t1 = (ca - ha - oa) / da;
    double t2 = (ca + ha - oa) / da;
    if (t1 > t2) std::swap(t1, t2);
    if (t1 > tmin) {
      tmin = t1;
      axis_min = a;
    }
    tmax = std::min(tmax, t2);
    if (tmin > tmax) return false;
  }
  double t = tmin;
  if (t < 1e-6) return false;  // origin inside or behind: treat as miss
  s = t;
  const Vec3 p = o + d * t;
  normal = {0, 0, 0};
  const double sign = (axis_min == 0 ? p.x - c.x : (axis_min == 1 ? p.y - c.y : p.z - c.z)) >= 0 ? 1.0 : -1.0;
  if (axis_min == 0)
    normal.x = sign;
  else if (axis_min == 1)
    normal.y = sign;
  else
    normal.z = sign;
  return true;
}

inline Vec3 shade(const SceneSpec& scene, const Vec3& albedo, const Vec3& n) {
  const double lam = std::max(0.0, n.dot(scene.light_dir));
  const double k = scene.ambient + (1.0 - scene.ambient) * lam;
  return albedo * k;
}

}  // namespace detail

/// Traces one pixel; returns shaded color, Euclidean ray distance (infinity
/// for sky) and the hit id.
inline Vec3 trace_ray(const SceneSpec& scene, const Vec3& origin,
                      const Vec3& dir, double t, double& depth, int& hit_id) {
  double best = std::numeric_limits<double>::infinity();
  Vec3 normal, albedo;
  hit_id = kHitSky;
  for (size_t i = 0; i < scene.primitives.size(); ++i) {
    const Primitive& p = scene.primitives[i];
    const Vec3 c = p.center_at(t);
    double s;
    Vec3 n;
    bool hit = p.shape == PrimShape::sphere
                   ? detail::intersect_sphere(origin, dir, c, p.half_extent.x, s, n)
                   : detail::intersect_aab(origin, dir, c, p.half_extent, s, n);
    if (hit && s < best) {
      best = s;
      normal = n;
      albedo = p.albedo;
      hit_id = static_cast<int>(i);
    }
  }
  // Ground plane z = ground_height with checker albedo.
  if (std::abs(dir.z) > 1e-12) {
    const double s = (scene.ground_height - origin.z) / dir.z;
    if (s > 1e-6 && s < best) {
      const Vec3 p = origin + dir * s;
      const i64 px = static_cast<i64>(std::floor(p.x / scene.checker_cell));
      const i64 py = static_cast<i64>(std::floor(p.y / scene.checker_cell));
      best = s;
      normal = {0, 0, 1};
      albedo = ((px + py) & 1) ? scene.checker_color_b : scene.checker_color_a;
      hit_id = kHitGround;
    }
  }
  if (hit_id == kHitSky) {
    depth = std::numeric_limits<double>::infinity();
    return scene.sky_color;
  }
  depth = best;
  return detail::shade(scene, albedo, normal);
}

/// Renders one view at time t: image [H,W,3], depth [H,W] (+inf for sky).
/// `hit_ids` (optional, size H*W) records what each pixel hit.
inline void raytrace_view(const SceneSpec& scene, const CameraModel& cam,
                          double t, Tensor<float>& image, Tensor<float>& depth,
                          std::vector<int>* hit_ids = nullptr) {
  cam.validate();
  const i64 H = cam.height, W = cam.width;
  image = Tensor<float>(Shape{H, W, 3});
  depth = Tensor<float>(Shape{H, W});
  if (hit_ids) hit_ids->assign(H * W, kHitSky);
  const Vec3 origin = cam.center();
  const Mat3 r_cw = cam.rot_matrix().transposed();
  for (i64 y = 0; y < H; ++y)
    for (i64 x = 0; x < W; ++x) {
      const Vec3 d_cam{(double(x) - cam.cx) / cam.fx,
                       (double(y) - cam.cy) / cam.fy, 1.0};
      const Vec3 dir = (r_cw * d_cam).normalized();
      double dist;
      int hid;
      const Vec3 rgb = trace_ray(scene, origin, dir, t, dist, hid);
      image[(y * W + x) * 3 + 0] = static_cast<float>(rgb.x);
      image[(y * W + x) * 3 + 1] = static_cast<float>(rgb.y);
      image[(y * W + x) * 3 + 2] = static_cast<float>(rgb.z);
      depth[y * W + x] = static_cast<float>(dist);
      if (hit_ids) (*hit_ids)[y * W + x] = hid;
    }
}

}  // namespace gw::synth
