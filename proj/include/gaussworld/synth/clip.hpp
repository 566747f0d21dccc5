// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "gaussworld/core/threading.hpp"
#include "gaussworld/synth/conditions.hpp"
#include "gaussworld/synth/raytrace.hpp"

namespace gw::synth {

struct SceneConditions {
  std::vector<i64> text_tokens;
  std::vector<std::vector<BoxAnnotation>> boxes;  // [T][n_boxes]
  std::vector<LanePolyline> lanes;
  Tensor<float> box_raster;   // [T,V,H,W]
  Tensor<float> lane_raster;  // [T,V,H,W]
};

/// One training sample: T frames x V views with dense depth, cameras with
/// ego motion folded in, and control annotations.
struct MultiViewClip {
  std::string id;
  Tensor<float> images;  // [T,V,H,W,3] in [0,1]
  Tensor<float> depth;   // [T,V,H,W] meters, +inf for sky
  std::vector<std::vector<CameraModel>> cameras;  // [T][V]
  std::vector<double> timestamps;                 // [T] seconds
  SceneConditions conditions;
  std::vector<char> view_valid;  // [V] booleans

  i64 frames() const { return static_cast<i64>(timestamps.size()); }
  i64 views() const { return cameras.empty() ? 0 : static_cast<i64>(cameras[0].size()); }
  i64 height() const { return images.dim(2); }
  i64 width() const { return images.dim(3); }

  const float* image_ptr(i64 t, i64 v) const {
    return images.data() + ((t * views() + v) * height() * width()) * 3;
  }
  const float* depth_ptr(i64 t, i64 v) const {
    return depth.data() + (t * views() + v) * height() * width();
  }
};

inline std::vector<double> default_timestamps(i64 frames, double dt = 0.5) {
  std::vector<double> ts(frames);
  for (i64 i = 0; i < frames; ++i) ts[i] = double(i) * dt;
  return ts;
}

/// Renders a full clip from a scene and a camera rig. Ego motion is applied
/// to every view's extrinsics; conditions are rasterized per (t, v).
inline MultiViewClip render_clip(const SceneSpec& scene,
                                 const std::vector<CameraModel>& rig,
                                 const std::vector<double>& timestamps) {
  GW_REQUIRE(!rig.empty(), "render_clip needs a rig");
  for (size_t i = 1; i < timestamps.size(); ++i)
    GW_REQUIRE(timestamps[i] > timestamps[i - 1],
               "timestamps must be strictly increasing");
  GW_REQUIRE(scene.ego_trajectory.size() >= timestamps.size(),
             "scene ego trajectory shorter than clip");
  const i64 T = static_cast<i64>(timestamps.size());
  const i64 V = static_cast<i64>(rig.size());
  const i64 H = rig[0].height, W = rig[0].width;

  MultiViewClip clip;
  clip.timestamps = timestamps;
  clip.images = Tensor<float>(Shape{T, V, H, W, 3});
  clip.depth = Tensor<float>(Shape{T, V, H, W});
  clip.cameras.assign(T, std::vector<CameraModel>(V));
  clip.view_valid.assign(V, 1);
  clip.conditions.text_tokens = scene.text_tokens;
  clip.conditions.lanes = scene.lanes;
  clip.conditions.boxes.resize(T);
  clip.conditions.box_raster = Tensor<float>(Shape{T, V, H, W});
  clip.conditions.lane_raster = Tensor<float>(Shape{T, V, H, W});

  for (i64 t = 0; t < T; ++t) {
    for (i64 v = 0; v < V; ++v)
      clip.cameras[t][v] = rig_view_at_pose(rig[v], scene.ego_trajectory[t]);
    for (const auto& p : scene.primitives)
      clip.conditions.boxes[t].push_back(box_for_primitive(p, timestamps[t]));
  }

  init_threading();
#pragma omp parallel for schedule(static) collapse(2)
  for (i64 t = 0; t < T; ++t)
    for (i64 v = 0; v < V; ++v) {
      Tensor<float> img, dep;
      raytrace_view(scene, clip.cameras[t][v], timestamps[t], img, dep);
      std::copy_n(img.data(), H * W * 3,
                  clip.images.data() + ((t * V + v) * H * W) * 3);
      std::copy_n(dep.data(), H * W, clip.depth.data() + (t * V + v) * H * W);
      Tensor<float> br, lr;
      rasterize_conditions(clip.conditions.boxes[t], scene.lanes,
                           clip.cameras[t][v], br, lr);
      std::copy_n(br.data(), H * W,
                  clip.conditions.box_raster.data() + (t * V + v) * H * W);
      std::copy_n(lr.data(), H * W,
                  clip.conditions.lane_raster.data() + (t * V + v) * H * W);
    }
  return clip;
}

}  // namespace gw::synth
