// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "gaussworld/geom/vec.hpp"

namespace gw {

/// Pinhole camera. Extrinsics map world to camera: p_cam = R * p_world + t,
/// with the usual CV axes (x right, y down, z forward). Pixels are sampled
/// at integer coordinates, so the pixel (cx, cy) lies exactly on the
/// optical axis.
struct CameraModel {
  double fx = 1, fy = 1, cx = 0, cy = 0;
  Quat rotation;   // world -> camera
  Vec3 translation;
  i64 height = 0, width = 0;

  void validate() const {
    GW_REQUIRE(std::abs(rotation.norm() - 1.0) < 1e-6,
               "camera quaternion must be unit norm");
    GW_REQUIRE(fx > 0 && fy > 0, "camera focal lengths must be positive");
    GW_REQUIRE(cx >= 0 && cx < double(width) && cy >= 0 && cy < double(height),
               "principal point outside image");
    GW_REQUIRE(height > 0 && width > 0, "camera image size must be positive");
  }

  Mat3 rot_matrix() const { return rotation.to_matrix(); }

  Vec3 world_to_cam(const Vec3& p) const { return rot_matrix() * p + translation; }

  Vec3 center() const {
    // c = -R^T t
    return rot_matrix().transposed() * (-translation);
  }

  /// Unit ray direction in world coordinates through pixel (x, y).
  Vec3 ray_dir_world(double x, double y) const {
    const Vec3 d_cam{(x - cx) / fx, (y - cy) / fy, 1.0};
    return (rot_matrix().transposed() * d_cam).normalized();
  }

  /// Projects a world point; returns false when behind the camera.
  bool project(const Vec3& p_world, double& u, double& v, double& z) const {
    const Vec3 pc = world_to_cam(p_world);
    z = pc.z;
    if (pc.z <= 1e-9) return false;
    u = fx * pc.x / pc.z + cx;
    v = fy * pc.y / pc.z + cy;
    return true;
  }
};

/// Rigid pose (rotation + position) used for ego trajectories.
struct Pose {
  Quat rotation;  // body -> world
  Vec3 position;

  Vec3 apply(const Vec3& p_body) const {
    return rotation.to_matrix() * p_body + position;
  }
};

namespace synth {

/// Builds `n_views` pinhole cameras at the ego origin, yaw-spaced
/// 360/n_views degrees apart, sharing intrinsics derived from the
/// horizontal field of view. View 0 faces world +x; yaw increases
/// counterclockwise (toward +y). Cameras sit `rig_height` above ground.
inline std::vector<CameraModel> make_camera_rig(i64 n_views, double fov_deg,
                                                i64 height, i64 width,
                                                double rig_height = 1.6) {
  GW_REQUIRE(n_views >= 1, "rig needs at least one view");
  GW_REQUIRE(fov_deg >= 10.0 && fov_deg <= 120.0,
             "field of view out of range [10, 120] degrees");
  GW_REQUIRE(height > 0 && width > 0, "invalid image size");
  const double f = (double(width) / 2.0) / std::tan(fov_deg * 3.14159265358979323846 / 360.0);
  std::vector<CameraModel> rig;
  rig.reserve(n_views);
  for (i64 v = 0; v < n_views; ++v) {
    const double yaw = 2.0 * 3.14159265358979323846 * double(v) / double(n_views);
    // Camera axes in world coordinates (z-up world):
    //   forward (cam z) = (cos yaw, sin yaw, 0)
    //   right   (cam x) = (sin yaw, -cos yaw, 0)
    //   down    (cam y) = (0, 0, -1)
    Mat3 r_cw;  // camera -> world, columns are camera axes
    const double cy_ = std::cos(yaw), sy = std::sin(yaw);
    r_cw(0, 0) = sy;
    r_cw(1, 0) = -cy_;
    r_cw(2, 0) = 0;
    r_cw(0, 1) = 0;
    r_cw(1, 1) = 0;
    r_cw(2, 1) = -1;
    r_cw(0, 2) = cy_;
    r_cw(1, 2) = sy;
    r_cw(2, 2) = 0;
    CameraModel cam;
    cam.fx = cam.fy = f;
    cam.cx = double(width) / 2.0;
    cam.cy = double(height) / 2.0;
    cam.height = height;
    cam.width = width;
    cam.rotation = Quat::from_matrix(r_cw.transposed());
    const Vec3 center{0, 0, rig_height};
    cam.translation = -(cam.rot_matrix() * center);
    cam.validate();
    rig.push_back(cam);
  }
  return rig;
}

/// Camera for a rig view after moving the rig by an ego pose
/// (world <- ego body): extrinsics absorb the motion, so downstream code
/// only ever sees cameras.
inline CameraModel rig_view_at_pose(const CameraModel& base, const Pose& ego) {
  // p_cam = R_base * p_body + t_base, p_body = R_ego^T (p_world - pos)
  CameraModel cam = base;
  const Quat q = base.rotation * ego.rotation.conj();
  cam.rotation = q.normalized();
  cam.translation =
      base.translation - (cam.rot_matrix() * ego.position);
  cam.validate();
  return cam;
}

}  // namespace synth
}  // namespace gw
