// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "gaussworld/core/rng.hpp"
#include "gaussworld/geom/camera.hpp"

namespace gw::synth {

enum class PrimShape { sphere, box };

struct Primitive {
  PrimShape shape = PrimShape::sphere;
  Vec3 center;       // position at t = 0
  Vec3 half_extent;  // spheres use .x as radius
  Vec3 albedo;
  Vec3 velocity;  // constant linear velocity, m/s
  int class_id = 0;

  Vec3 center_at(double t) const { return center + velocity * t; }
  /// Tight axis-aligned half extents (cube for spheres).
  Vec3 bound_half() const {
    if (shape == PrimShape::sphere)
      return {half_extent.x, half_extent.x, half_extent.x};
    return half_extent;
  }
};

struct LanePolyline {
  std::vector<Vec3> points;
};

/// Scene descriptor token ids. The toy vocabulary has three fields:
/// weather {0: clear, 1: overcast}, time-of-day {2: day, 3: dusk},
/// primitive-count bucket {4: sparse, 5: medium, 6: busy}.
constexpr i64 kTextVocabSize = 8;

struct SceneComplexity {
  i64 min_primitives = 4;
  i64 max_primitives = 9;
  double max_speed = 6.0;  // primitive ||v|| bound, m/s
  double min_radius = 0.45;
  double max_radius = 1.1;
  double spawn_near = 6.0;
  double spawn_far = 30.0;
  i64 min_lanes = 2;
  i64 max_lanes = 3;
  double ego_speed_max = 4.0;
  double ego_yaw_rate_max = 0.02;
  double moving_fraction = 0.5;
  i64 frames = 19;
  double frame_dt = 0.5;  // 2 Hz analog

  void validate() const {
    GW_REQUIRE(min_primitives >= 1 && max_primitives >= min_primitives,
               "primitive count range invalid");
    GW_REQUIRE(max_speed >= 0 && min_radius > 0 && max_radius >= min_radius,
               "primitive size/speed range invalid");
    GW_REQUIRE(min_lanes >= 0 && max_lanes >= min_lanes, "lane range invalid");
    GW_REQUIRE(frames >= 1 && frame_dt > 0, "frame config invalid");
  }
};

struct SceneSpec {
  std::vector<Primitive> primitives;
  double ground_height = 0.0;
  Vec3 checker_color_a{0.78, 0.76, 0.72};
  Vec3 checker_color_b{0.33, 0.35, 0.38};
  double checker_cell = 2.0;
  Vec3 sky_color{0.45, 0.66, 0.95};
  Vec3 light_dir{0.35, 0.25, 0.9};  // toward the light, normalized on build
  double ambient = 0.35;
  std::vector<LanePolyline> lanes;
  std::vector<Pose> ego_trajectory;  // pose per timestep
  std::vector<i64> text_tokens;      // {weather, tod, count bucket}
  u64 seed = 0;

  void validate(const SceneComplexity& cx) const {
    GW_REQUIRE(!primitives.empty(), "scene needs at least one primitive");
    for (const auto& p : primitives) {
      GW_REQUIRE(p.center.z - p.bound_half().z >= ground_height - 1e-9,
                 "primitive below ground at t=0");
      GW_REQUIRE(p.velocity.norm() <= cx.max_speed + 1e-9,
                 "primitive velocity above bound");
    }
  }
};

/// Deterministic scene from a seed: same seed, same bits.
inline SceneSpec sample_scene(u64 seed, const SceneComplexity& cx) {
  cx.validate();
  Rng rng(seed ^ 0x5ce7e5eedULL);
  SceneSpec scene;
  scene.seed = seed;

  const i64 n_prim = rng.range(cx.min_primitives, cx.max_primitives);
  for (i64 i = 0; i < n_prim; ++i) {
    Primitive p;
    p.shape = rng.bernoulli(0.5) ? PrimShape::sphere : PrimShape::box;
    p.class_id = p.shape == PrimShape::sphere ? 0 : 1;
    const double dist = rng.uniform(cx.spawn_near, cx.spawn_far);
    const double ang = rng.uniform(0.0, 6.283185307179586);
    const double r = rng.uniform(cx.min_radius, cx.max_radius);
    if (p.shape == PrimShape::sphere) {
      p.half_extent = {r, r, r};
    } else {
      p.half_extent = {r * rng.uniform(0.7, 1.3), r * rng.uniform(0.7, 1.3),
                       r * rng.uniform(0.7, 1.3)};
    }
    p.center = {dist * std::cos(ang), dist * std::sin(ang),
                scene.ground_height + p.bound_half().z};
    p.albedo = {rng.uniform(0.15, 0.9), rng.uniform(0.15, 0.9),
                rng.uniform(0.15, 0.9)};
    if (rng.bernoulli(cx.moving_fraction)) {
      const double speed = rng.uniform(0.5, cx.max_speed);
      const double va = rng.uniform(0.0, 6.283185307179586);
      p.velocity = {speed * std::cos(va), speed * std::sin(va), 0.0};
    }
    scene.primitives.push_back(p);
  }

  // Lanes: straight polylines parallel to +x at fixed lateral offsets.
  const i64 n_lanes = rng.range(cx.min_lanes, cx.max_lanes);
  const double offsets[4] = {0.0, -3.5, 3.5, -7.0};
  for (i64 l = 0; l < n_lanes && l < 4; ++l) {
    LanePolyline lane;
    for (double x = -12.0; x <= 48.0; x += 6.0)
      lane.points.push_back({x, offsets[l], scene.ground_height});
    scene.lanes.push_back(lane);
  }

  // Ego trajectory: constant speed along heading with constant yaw rate.
  const double speed = rng.uniform(0.0, cx.ego_speed_max);
  const double yaw_rate = rng.uniform(-cx.ego_yaw_rate_max, cx.ego_yaw_rate_max);
  for (i64 f = 0; f < cx.frames; ++f) {
    const double t = double(f) * cx.frame_dt;
    const double yaw = yaw_rate * t;
    Pose pose;
    pose.rotation = Quat::from_axis_angle({0, 0, 1}, yaw);
    if (std::abs(yaw_rate) < 1e-9) {
      pose.position = {speed * t, 0.0, 0.0};
    } else {
      const double rr = speed / yaw_rate;
      pose.position = {rr * std::sin(yaw), rr * (1.0 - std::cos(yaw)), 0.0};
    }
    scene.ego_trajectory.push_back(pose);
  }

  // Appearance + toy text descriptors.
  const i64 weather = rng.below(2);
  const i64 tod = rng.below(2);
  if (weather == 0) {
    scene.sky_color = {0.42 + rng.uniform(0.0, 0.08), 0.62, 0.95};
  } else {
    scene.sky_color = {0.66, 0.68, 0.72};
  }
  if (tod == 1) {  // dusk: warmer, darker
    scene.sky_color = scene.sky_color.cwise({0.85, 0.7, 0.6});
    scene.ambient = 0.45;
  }
  const double laz = rng.uniform(0.0, 6.283185307179586);
  scene.light_dir = Vec3{0.4 * std::cos(laz), 0.4 * std::sin(laz), 0.9}.normalized();
  const i64 bucket = n_prim <= 4 ? 0 : (n_prim <= 7 ? 1 : 2);
  scene.text_tokens = {weather, 2 + tod, 4 + bucket};

  scene.validate(cx);
  return scene;
}

}  // namespace gw::synth
