// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>
#include <cstring>
#include <filesystem>

#include "gaussworld/synth/dataset.hpp"

using namespace gw;
using namespace gw::synth;

TEST_CASE("camera rig: single 90 degree view has fx 32 at 64px") {
  auto rig = make_camera_rig(1, 90.0, 64, 64);
  REQUIRE(rig.size() == 1);
  REQUIRE_THAT(rig[0].fx, Catch::Matchers::WithinAbs(32.0, 1e-9));
  REQUIRE_THAT(rig[0].fy, Catch::Matchers::WithinAbs(32.0, 1e-9));
}

TEST_CASE("camera rig: six views yaw-spaced 60 degrees") {
  auto rig = make_camera_rig(6, 60.0, 64, 64);
  REQUIRE(rig.size() == 6);
  for (i64 v = 0; v < 6; ++v) {
    // forward axis in world coords = R^T * (0,0,1)
    const Mat3 r = rig[v].rot_matrix().transposed();
    const Vec3 fwd = r * Vec3{0, 0, 1};
    const double yaw = 2.0 * M_PI * double(v) / 6.0;
    REQUIRE_THAT(fwd.x, Catch::Matchers::WithinAbs(std::cos(yaw), 1e-9));
    REQUIRE_THAT(fwd.y, Catch::Matchers::WithinAbs(std::sin(yaw), 1e-9));
    REQUIRE_THAT(fwd.z, Catch::Matchers::WithinAbs(0.0, 1e-9));
  }
}

TEST_CASE("camera rig: two opposed views have opposite forward axes") {
  auto rig = make_camera_rig(2, 90.0, 32, 32);
  const Vec3 f0 = rig[0].rot_matrix().transposed() * Vec3{0, 0, 1};
  const Vec3 f1 = rig[1].rot_matrix().transposed() * Vec3{0, 0, 1};
  REQUIRE((f0 + f1).norm() < 1e-9);
  for (auto& cam : rig)
    REQUIRE(std::abs(cam.rotation.norm() - 1.0) < 1e-9);
}

TEST_CASE("camera rig rejects invalid fov") {
  REQUIRE_THROWS_AS(make_camera_rig(4, 5.0, 64, 64), Error);
  REQUIRE_THROWS_AS(make_camera_rig(4, 150.0, 64, 64), Error);
  REQUIRE_THROWS_AS(make_camera_rig(0, 60.0, 64, 64), Error);
}

TEST_CASE("sample_scene determinism and seed sensitivity") {
  SceneComplexity cx;
  SceneSpec a = sample_scene(12345, cx);
  SceneSpec b = sample_scene(12345, cx);
  REQUIRE(a.primitives.size() == b.primitives.size());
  for (size_t i = 0; i < a.primitives.size(); ++i) {
    REQUIRE(std::memcmp(&a.primitives[i].center, &b.primitives[i].center,
                        sizeof(Vec3)) == 0);
    REQUIRE(std::memcmp(&a.primitives[i].velocity, &b.primitives[i].velocity,
                        sizeof(Vec3)) == 0);
  }
  REQUIRE(a.text_tokens == b.text_tokens);

  SceneSpec c = sample_scene(0, cx);
  SceneSpec d = sample_scene(1, cx);
  bool differs = c.primitives.size() != d.primitives.size();
  if (!differs)
    for (size_t i = 0; i < c.primitives.size(); ++i)
      if (std::memcmp(&c.primitives[i].center, &d.primitives[i].center,
                      sizeof(Vec3)) != 0)
        differs = true;
  REQUIRE(differs);
}

TEST_CASE("sample_scene collapsed primitive range") {
  SceneComplexity cx;
  cx.min_primitives = cx.max_primitives = 3;
  SceneSpec s = sample_scene(7, cx);
  REQUIRE(s.primitives.size() == 3);
}

TEST_CASE("sample_scene invariants hold") {
  SceneComplexity cx;
  for (u64 seed = 0; seed < 20; ++seed) {
    SceneSpec s = sample_scene(seed, cx);
    REQUIRE(!s.primitives.empty());
    for (const auto& p : s.primitives) {
      REQUIRE(p.center.z - p.bound_half().z >= s.ground_height - 1e-9);
      REQUIRE(p.velocity.norm() <= cx.max_speed + 1e-9);
    }
  }
}

namespace {

CameraModel axis_camera(i64 size = 64) {
  // Even-sized camera: the principal point (W/2, H/2) is an integer pixel,
  // so that pixel's ray runs exactly along world +x.
  auto rig = make_camera_rig(1, 90.0, size, size, 0.0);
  return rig[0];
}

SceneSpec empty_scene() {
  SceneSpec s;
  s.primitives.push_back({PrimShape::sphere,
                          {1000.0, 1000.0, 5.0},
                          {0.1, 0.1, 0.1},
                          {0.5, 0.5, 0.5},
                          {0, 0, 0},
                          0});
  s.ground_height = -std::numeric_limits<double>::infinity();  // no ground
  return s;
}

}  // namespace

TEST_CASE("raytrace: central pixel depth of an on-axis sphere") {
  CameraModel cam = axis_camera();
  SceneSpec s = empty_scene();
  s.primitives[0] = {PrimShape::sphere, {5.0, 0.0, 0.0}, {1.0, 1.0, 1.0},
                     {0.9, 0.2, 0.2},  {0, 0, 0},        0};
  Tensor<float> img, dep;
  raytrace_view(s, cam, 0.0, img, dep);
  const i64 c = 32 * 64 + 32;
  REQUIRE_THAT(double(dep[c]), Catch::Matchers::WithinAbs(4.0, 1e-6));
}

TEST_CASE("raytrace: linear motion shifts the sphere") {
  CameraModel cam = axis_camera();
  SceneSpec s = empty_scene();
  // Sphere starts off axis; velocity brings it on axis at t=2.
  s.primitives[0] = {PrimShape::sphere, {5.0, -2.0, 0.0}, {1.0, 1.0, 1.0},
                     {0.9, 0.2, 0.2},  {0.0, 1.0, 0.0},   0};
  Tensor<float> img, dep;
  raytrace_view(s, cam, 2.0, img, dep);
  const i64 c = 32 * 64 + 32;
  REQUIRE_THAT(double(dep[c]), Catch::Matchers::WithinAbs(4.0, 1e-6));
  // At t=0 the central pixel misses it.
  raytrace_view(s, cam, 0.0, img, dep);
  REQUIRE(std::isinf(dep[c]));
}

TEST_CASE("raytrace: empty scene gives sky color and infinite depth") {
  CameraModel cam = axis_camera(32);
  SceneSpec s = empty_scene();
  s.primitives[0].center = {1e7, 1e7, 5};
  std::vector<int> hits;
  Tensor<float> img, dep;
  raytrace_view(s, cam, 0.0, img, dep, &hits);
  for (i64 p = 0; p < 32 * 32; ++p) {
    REQUIRE(std::isinf(dep[p]));
    REQUIRE(hits[p] == kHitSky);
    REQUIRE_THAT(double(img[p * 3 + 0]),
                 Catch::Matchers::WithinAbs(s.sky_color.x, 1e-6));
  }
}

TEST_CASE("depth/image consistency: finite depth iff hit branch") {
  SceneComplexity cx;
  SceneSpec s = sample_scene(99, cx);
  auto rig = make_camera_rig(3, 72.0, 32, 32);
  std::vector<int> hits;
  Tensor<float> img, dep;
  raytrace_view(s, rig[1], 1.0, img, dep, &hits);
  for (i64 p = 0; p < 32 * 32; ++p) {
    REQUIRE(std::isfinite(double(dep[p])) == (hits[p] != kHitSky));
    if (std::isfinite(double(dep[p]))) REQUIRE(dep[p] > 0);
  }
  REQUIRE(img.all_finite());
}

TEST_CASE("render_clip: static scene static ego gives identical frames") {
  SceneComplexity cx;
  cx.frames = 4;
  cx.moving_fraction = 0.0;
  cx.ego_speed_max = 0.0;
  cx.ego_yaw_rate_max = 0.0;
  SceneSpec s = sample_scene(3, cx);
  auto rig = make_camera_rig(2, 72.0, 24, 24);
  auto clip = render_clip(s, rig, default_timestamps(4));
  const i64 frame_elems = 2 * 24 * 24 * 3;
  REQUIRE(std::memcmp(clip.images.data(),
                      clip.images.data() + 3 * frame_elems,
                      frame_elems * sizeof(float)) == 0);
}

TEST_CASE("render_clip: 19 default frames and strictly increasing times") {
  SceneComplexity cx;
  SceneSpec s = sample_scene(5, cx);
  auto rig = make_camera_rig(2, 72.0, 16, 16);
  auto clip = render_clip(s, rig, default_timestamps(19));
  REQUIRE(clip.frames() == 19);
  REQUIRE(clip.images.shape() == Shape({19, 2, 16, 16, 3}));
  auto bad = default_timestamps(4);
  bad[2] = bad[1];
  REQUIRE_THROWS_AS(render_clip(s, rig, bad), Error);
}

TEST_CASE("render_clip: moving primitive raster centroid translates monotonically") {
  SceneComplexity cx;
  cx.frames = 6;
  cx.min_primitives = cx.max_primitives = 1;
  cx.moving_fraction = 0.0;
  cx.ego_speed_max = 0.0;
  cx.ego_yaw_rate_max = 0.0;
  SceneSpec s = sample_scene(21, cx);
  s.primitives[0].shape = PrimShape::box;
  s.primitives[0].class_id = 1;
  s.primitives[0].center = {8.0, -4.0, 0.8};
  s.primitives[0].half_extent = {0.8, 0.8, 0.8};
  s.primitives[0].velocity = {0.0, 1.2, 0.0};  // crosses the forward view
  auto rig = make_camera_rig(1, 72.0, 48, 48);
  auto clip = render_clip(s, rig, default_timestamps(6));
  std::vector<double> centroids;
  for (i64 t = 0; t < 6; ++t) {
    const float* r = clip.conditions.box_raster.data() + t * 48 * 48;
    double sx = 0, n = 0;
    for (i64 y = 0; y < 48; ++y)
      for (i64 x = 0; x < 48; ++x)
        if (r[y * 48 + x] > 0) {
          sx += double(x);
          n += 1;
        }
    REQUIRE(n > 0);
    centroids.push_back(sx / n);
  }
  // Strictly monotone lateral translation (direction set by the camera's
  // x-axis convention).
  const double dir = centroids[1] > centroids[0] ? 1.0 : -1.0;
  for (size_t i = 1; i < centroids.size(); ++i)
    REQUIRE(dir * (centroids[i] - centroids[i - 1]) > 0.5);
}

TEST_CASE("rasterize_conditions: empty annotations give zero rasters") {
  CameraModel cam = axis_camera(32);
  Tensor<float> br, lr;
  rasterize_conditions({}, {}, cam, br, lr);
  for (i64 i = 0; i < br.numel(); ++i) {
    REQUIRE(br[i] == 0.0f);
    REQUIRE(lr[i] == 0.0f);
  }
}

TEST_CASE("rasterize_conditions: centered box covers image center") {
  CameraModel cam = axis_camera(32);
  BoxAnnotation box{{6.0, 0.0, 0.0}, {1.5, 1.5, 1.5}, 0.0, 1};
  Tensor<float> br, lr;
  rasterize_conditions({box}, {}, cam, br, lr);
  REQUIRE(br[16 * 32 + 16] == 1.0f);  // class 1 intensity = 1.0
}

TEST_CASE("rasterize_conditions: box behind camera skipped") {
  CameraModel cam = axis_camera(32);
  BoxAnnotation box{{-6.0, 0.0, 0.0}, {1.5, 1.5, 1.5}, 0.0, 0};
  Tensor<float> br, lr;
  rasterize_conditions({box}, {}, cam, br, lr);
  for (i64 i = 0; i < br.numel(); ++i) REQUIRE(br[i] == 0.0f);
}

TEST_CASE("motion consistency: raster vs raytraced box silhouette IoU") {
  SceneComplexity cx;
  auto rig = make_camera_rig(4, 72.0, 96, 96);
  int tested = 0;
  for (u64 seed = 100; seed < 120; ++seed) {
    SceneSpec s = sample_scene(seed, cx);
    const double t = 1.5;
    for (i64 v = 0; v < 4; ++v) {
      const CameraModel& cam = rig[v];
      for (size_t pi = 0; pi < s.primitives.size(); ++pi) {
        // analytic center check
        const Vec3 c = s.primitives[pi].center_at(t);
        const Vec3 expect = s.primitives[pi].center + s.primitives[pi].velocity * t;
        REQUIRE((c - expect).norm() < 1e-12);

        // Silhouette of the enclosing box geometry via ray tracing.
        const BoxAnnotation box = box_for_primitive(s.primitives[pi], t);
        SceneSpec solo = s;
        solo.primitives = {Primitive{PrimShape::box, box.center,
                                     box.size * 0.5, {1, 1, 1}, {0, 0, 0}, 0}};
        solo.ground_height = -1e8;
        Tensor<float> img, dep;
        std::vector<int> hits;
        raytrace_view(solo, cam, 0.0, img, dep, &hits);
        Tensor<float> br, lr;
        rasterize_conditions({box}, {}, cam, br, lr);
        double inter = 0, uni = 0, sil = 0;
        const float want = float(box.class_id + 1) / float(kNumClasses);
        for (i64 p = 0; p < 96 * 96; ++p) {
          const bool a = hits[p] == 0;
          const bool b = br[p] > 0;
          if (b) REQUIRE_THAT(double(br[p]), Catch::Matchers::WithinAbs(want, 1e-6));
          sil += a;
          inter += (a && b);
          uni += (a || b);
        }
        if (sil < 40) continue;  // skip sub-resolution silhouettes
        ++tested;
        REQUIRE(inter / uni >= 0.7);
      }
    }
  }
  REQUIRE(tested > 25);
}

TEST_CASE("camera quaternions stay unit through pose composition") {
  SceneComplexity cx;
  SceneSpec s = sample_scene(55, cx);
  auto rig = make_camera_rig(6, 72.0, 16, 16);
  auto clip = render_clip(s, rig, default_timestamps(19));
  for (i64 t = 0; t < clip.frames(); ++t)
    for (i64 v = 0; v < clip.views(); ++v)
      REQUIRE(std::abs(clip.cameras[t][v].rotation.norm() - 1.0) < 1e-6);
}

TEST_CASE("dataset round trip is bit exact and ordered") {
  namespace fs = std::filesystem;
  const std::string root = "/tmp/gw_test_dataset";
  fs::remove_all(root);
  SceneComplexity cx;
  cx.frames = 3;
  auto rig = make_camera_rig(2, 72.0, 16, 16);
  std::vector<MultiViewClip> clips;
  for (i64 i = 0; i < 5; ++i) {
    SceneSpec s = sample_scene(1000 + i, cx);
    auto clip = render_clip(s, rig, default_timestamps(3));
    clip.id = clip_id_for_index(i);
    clips.push_back(std::move(clip));
  }
  write_dataset(root, clips, 0.2);
  auto loaded = read_dataset(root);
  REQUIRE(loaded.size() == 5);
  for (size_t i = 0; i < 5; ++i) {
    REQUIRE(loaded[i].id == clips[i].id);  // lexicographic == insertion here
    REQUIRE(std::memcmp(loaded[i].images.data(), clips[i].images.data(),
                        clips[i].images.numel() * sizeof(float)) == 0);
    REQUIRE(std::memcmp(loaded[i].depth.data(), clips[i].depth.data(),
                        clips[i].depth.numel() * sizeof(float)) == 0);
    REQUIRE(std::memcmp(loaded[i].conditions.box_raster.data(),
                        clips[i].conditions.box_raster.data(),
                        clips[i].conditions.box_raster.numel() * sizeof(float)) == 0);
    for (i64 t = 0; t < 3; ++t)
      for (i64 v = 0; v < 2; ++v) {
        const auto& a = loaded[i].cameras[t][v];
        const auto& b = clips[i].cameras[t][v];
        REQUIRE(a.fx == b.fx);
        REQUIRE(a.rotation.w == b.rotation.w);
        REQUIRE(a.translation.x == b.translation.x);
      }
  }

  // split sanity: 1 val clip out of 5 at 0.2
  auto entries = read_manifest(root);
  int n_val = 0;
  for (auto& e : entries) n_val += e.split == "val";
  REQUIRE(n_val == 1);

  // errors
  fs::remove_all("/tmp/gw_empty_dir");
  fs::create_directories("/tmp/gw_empty_dir");
  REQUIRE_THROWS_WITH(read_dataset("/tmp/gw_empty_dir"),
                      Catch::Matchers::ContainsSubstring("no clips found"));
  fs::remove(root + "/" + clips[2].id + "/depth.gwt");
  REQUIRE_THROWS_WITH(read_dataset(root),
                      Catch::Matchers::ContainsSubstring(clips[2].id));
}

TEST_CASE("generate_dataset determinism") {
  namespace fs = std::filesystem;
  const std::string r1 = "/tmp/gw_det_a", r2 = "/tmp/gw_det_b";
  fs::remove_all(r1);
  fs::remove_all(r2);
  SceneComplexity cx;
  generate_dataset(r1, 77, 2, 2, 3, 16, 16, cx);
  generate_dataset(r2, 77, 2, 2, 3, 16, 16, cx);
  auto a = read_dataset(r1), b = read_dataset(r2);
  for (size_t i = 0; i < a.size(); ++i) {
    REQUIRE(std::memcmp(a[i].images.data(), b[i].images.data(),
                        a[i].images.numel() * sizeof(float)) == 0);
    REQUIRE(std::memcmp(a[i].depth.data(), b[i].depth.data(),
                        a[i].depth.numel() * sizeof(float)) == 0);
  }
}
