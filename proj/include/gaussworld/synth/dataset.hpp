// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "gaussworld/core/tensorfile.hpp"
#include "gaussworld/synth/clip.hpp"

namespace gw::synth {

namespace fs = std::filesystem;

// On-disk layout: one directory per clip holding images/depth as flat
// binary tensors plus a human-readable meta.txt (cameras, timestamps,
// tokens, boxes, lanes, view validity). Rasters are deterministic
// functions of the stored annotations and are recomputed on read.
// A manifest.txt at the root lists "<clip_id> <split>" lines.

namespace detail {

inline void write_double(std::ostream& os, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << buf;
}

inline void write_meta(const std::string& path, const MultiViewClip& clip) {
  std::ofstream os(path);
  GW_REQUIRE(os.good(), "cannot write " + path);
  const i64 T = clip.frames(), V = clip.views();
  os << "gwmeta 1\n";
  os << "timestamps " << T << "\n";
  for (i64 t = 0; t < T; ++t) {
    write_double(os, clip.timestamps[t]);
    os << (t + 1 < T ? ' ' : '\n');
  }
  os << "views " << V << "\nvalid";
  for (i64 v = 0; v < V; ++v) os << " " << int(clip.view_valid[v]);
  os << "\ntokens " << clip.conditions.text_tokens.size();
  for (i64 tok : clip.conditions.text_tokens) os << " " << tok;
  os << "\ncameras " << T * V << "\n";
  for (i64 t = 0; t < T; ++t)
    for (i64 v = 0; v < V; ++v) {
      const CameraModel& c = clip.cameras[t][v];
      const double vals[] = {c.fx,           c.fy,           c.cx,
                             c.cy,           c.rotation.w,   c.rotation.x,
                             c.rotation.y,   c.rotation.z,   c.translation.x,
                             c.translation.y, c.translation.z};
      for (double x : vals) {
        write_double(os, x);
        os << ' ';
      }
      os << c.height << ' ' << c.width << '\n';
    }
  os << "boxes " << T << "\n";
  for (i64 t = 0; t < T; ++t) {
    os << clip.conditions.boxes[t].size() << "\n";
    for (const auto& b : clip.conditions.boxes[t]) {
      const double vals[] = {b.center.x, b.center.y, b.center.z, b.size.x,
                             b.size.y,   b.size.z,   b.yaw};
      for (double x : vals) {
        write_double(os, x);
        os << ' ';
      }
      os << b.class_id << '\n';
    }
  }
  os << "lanes " << clip.conditions.lanes.size() << "\n";
  for (const auto& lane : clip.conditions.lanes) {
    os << lane.points.size() << "\n";
    for (const auto& p : lane.points) {
      write_double(os, p.x);
      os << ' ';
      write_double(os, p.y);
      os << ' ';
      write_double(os, p.z);
      os << '\n';
    }
  }
  GW_REQUIRE(os.good(), "short write: " + path);
}

inline void read_meta(const std::string& path, MultiViewClip& clip) {
  std::ifstream is(path);
  GW_REQUIRE(is.good(), "cannot read " + path);
  std::string word;
  i64 n;
  is >> word >> n;
  GW_REQUIRE(word == "gwmeta" && n == 1, "bad meta magic in " + path);
  is >> word >> n;
  GW_REQUIRE(word == "timestamps", "meta parse error (timestamps)");
  clip.timestamps.resize(n);
  for (auto& t : clip.timestamps) is >> t;
  i64 V;
  is >> word >> V;
  GW_REQUIRE(word == "views", "meta parse error (views)");
  is >> word;
  GW_REQUIRE(word == "valid", "meta parse error (valid)");
  clip.view_valid.resize(V);
  for (i64 v = 0; v < V; ++v) {
    int b;
    is >> b;
    clip.view_valid[v] = static_cast<char>(b);
  }
  is >> word >> n;
  GW_REQUIRE(word == "tokens", "meta parse error (tokens)");
  clip.conditions.text_tokens.resize(n);
  for (auto& t : clip.conditions.text_tokens) is >> t;
  i64 ncam;
  is >> word >> ncam;
  GW_REQUIRE(word == "cameras", "meta parse error (cameras)");
  const i64 T = static_cast<i64>(clip.timestamps.size());
  GW_REQUIRE(ncam == T * V, "camera count mismatch in " + path);
  clip.cameras.assign(T, std::vector<CameraModel>(V));
  for (i64 t = 0; t < T; ++t)
    for (i64 v = 0; v < V; ++v) {
      CameraModel& c = clip.cameras[t][v];
      is >> c.fx >> c.fy >> c.cx >> c.cy >> c.rotation.w >> c.rotation.x >>
          c.rotation.y >> c.rotation.z >> c.translation.x >>
          c.translation.y >> c.translation.z >> c.height >> c.width;
    }
  is >> word >> n;
  GW_REQUIRE(word == "boxes" && n == T, "meta parse error (boxes)");
  clip.conditions.boxes.assign(T, {});
  for (i64 t = 0; t < T; ++t) {
    i64 nb;
    is >> nb;
    clip.conditions.boxes[t].resize(nb);
    for (auto& b : clip.conditions.boxes[t])
      is >> b.center.x >> b.center.y >> b.center.z >> b.size.x >> b.size.y >>
          b.size.z >> b.yaw >> b.class_id;
  }
  is >> word >> n;
  GW_REQUIRE(word == "lanes", "meta parse error (lanes)");
  clip.conditions.lanes.resize(n);
  for (auto& lane : clip.conditions.lanes) {
    i64 np;
    is >> np;
    lane.points.resize(np);
    for (auto& p : lane.points) is >> p.x >> p.y >> p.z;
  }
  GW_REQUIRE(!is.fail(), "meta parse error in " + path);
}

inline void recompute_rasters(MultiViewClip& clip) {
  const i64 T = clip.frames(), V = clip.views();
  const i64 H = clip.images.dim(2), W = clip.images.dim(3);
  clip.conditions.box_raster = Tensor<float>(Shape{T, V, H, W});
  clip.conditions.lane_raster = Tensor<float>(Shape{T, V, H, W});
#pragma omp parallel for schedule(static) collapse(2)
  for (i64 t = 0; t < T; ++t)
    for (i64 v = 0; v < V; ++v) {
      Tensor<float> br, lr;
      rasterize_conditions(clip.conditions.boxes[t], clip.conditions.lanes,
                           clip.cameras[t][v], br, lr);
      std::copy_n(br.data(), H * W,
                  clip.conditions.box_raster.data() + (t * V + v) * H * W);
      std::copy_n(lr.data(), H * W,
                  clip.conditions.lane_raster.data() + (t * V + v) * H * W);
    }
}

}  // namespace detail

inline void write_clip(const std::string& dir, const MultiViewClip& clip) {
  fs::create_directories(dir);
  write_tensor_file(dir + "/images.gwt", clip.images);
  write_tensor_file(dir + "/depth.gwt", clip.depth);
  detail::write_meta(dir + "/meta.txt", clip);
}

inline MultiViewClip read_clip(const std::string& dir, const std::string& id) {
  MultiViewClip clip;
  clip.id = id;
  try {
    clip.images = read_tensor_file<float>(dir + "/images.gwt");
    clip.depth = read_tensor_file<float>(dir + "/depth.gwt");
    detail::read_meta(dir + "/meta.txt", clip);
  } catch (const Error& e) {
    fail("clip '" + id + "': " + e.what());
  }
  GW_REQUIRE(clip.images.ndim() == 5 && clip.depth.ndim() == 4,
             "clip '" + id + "': malformed tensor ranks");
  detail::recompute_rasters(clip);
  return clip;
}

struct ManifestEntry {
  std::string id;
  std::string split;  // "train" | "val"
};

inline void write_manifest(const std::string& root,
                           const std::vector<ManifestEntry>& entries) {
  std::ofstream os(root + "/manifest.txt");
  GW_REQUIRE(os.good(), "cannot write manifest in " + root);
  for (const auto& e : entries) os << e.id << " " << e.split << "\n";
}

inline std::vector<ManifestEntry> read_manifest(const std::string& root) {
  std::ifstream is(root + "/manifest.txt");
  GW_REQUIRE(is.good(), "no clips found: missing manifest in " + root);
  std::vector<ManifestEntry> entries;
  std::string id, split;
  while (is >> id >> split) entries.push_back({id, split});
  GW_REQUIRE(!entries.empty(), "no clips found in " + root);
  std::sort(entries.begin(), entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) {
              return a.id < b.id;
            });
  return entries;
}

/// Writes clips plus manifest. Splits: the last ceil(val_fraction * n)
/// clips by id order become the validation split.
inline void write_dataset(const std::string& root,
                          const std::vector<MultiViewClip>& clips,
                          double val_fraction = 0.2) {
  GW_REQUIRE(!clips.empty(), "write_dataset: no clips");
  fs::create_directories(root);
  std::vector<ManifestEntry> entries;
  const i64 n = static_cast<i64>(clips.size());
  const i64 n_val = std::min<i64>(n - 1, i64(std::ceil(val_fraction * double(n))));
  for (i64 i = 0; i < n; ++i) {
    const auto& clip = clips[i];
    GW_REQUIRE(!clip.id.empty(), "write_dataset: clip without id");
    write_clip(root + "/" + clip.id, clip);
    entries.push_back({clip.id, i >= n - n_val ? "val" : "train"});
  }
  std::sort(entries.begin(), entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) {
              return a.id < b.id;
            });
  write_manifest(root, entries);
}

/// Reads every clip, in stable lexicographic id order.
inline std::vector<MultiViewClip> read_dataset(const std::string& root) {
  const auto entries = read_manifest(root);
  std::vector<MultiViewClip> clips;
  clips.reserve(entries.size());
  for (const auto& e : entries) clips.push_back(read_clip(root + "/" + e.id, e.id));
  return clips;
}

/// Lazy per-clip access for training loops (avoids holding a whole dataset
/// in memory). Clips are re-read from disk on every open().
class DatasetReader {
 public:
  explicit DatasetReader(std::string root) : root_(std::move(root)) {
    entries_ = read_manifest(root_);
  }

  const std::vector<ManifestEntry>& entries() const { return entries_; }

  std::vector<std::string> ids(const std::string& split) const {
    std::vector<std::string> out;
    for (const auto& e : entries_)
      if (split.empty() || e.split == split) out.push_back(e.id);
    return out;
  }

  MultiViewClip open(const std::string& id) const {
    return read_clip(root_ + "/" + id, id);
  }

  const std::string& root() const { return root_; }

 private:
  std::string root_;
  std::vector<ManifestEntry> entries_;
};

inline std::string clip_id_for_index(i64 i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "clip_%06" PRId64, i);
  return buf;
}

/// End-to-end dataset generation: seeded scenes rendered over a shared rig.
inline void generate_dataset(const std::string& root, u64 seed, i64 n_clips,
                             i64 n_views, i64 frames, i64 height, i64 width,
                             const SceneComplexity& base_cx,
                             double val_fraction = 0.2, double fov_deg = 72.0) {
  SceneComplexity cx = base_cx;
  cx.frames = frames;
  const auto rig = make_camera_rig(n_views, fov_deg, height, width);
  const auto ts = default_timestamps(frames, cx.frame_dt);
  fs::create_directories(root);
  Rng root_rng(seed);
  std::vector<ManifestEntry> entries;
  const i64 n_val = std::min<i64>(n_clips - 1,
                                  i64(std::ceil(val_fraction * double(n_clips))));
  for (i64 i = 0; i < n_clips; ++i) {
    const u64 clip_seed = root_rng.child(static_cast<u64>(i)).next_u64();
    SceneSpec scene = sample_scene(clip_seed, cx);
    MultiViewClip clip = render_clip(scene, rig, ts);
    clip.id = clip_id_for_index(i);
    write_clip(root + "/" + clip.id, clip);
    entries.push_back({clip.id, i >= n_clips - n_val ? "val" : "train"});
  }
  std::sort(entries.begin(), entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) {
              return a.id < b.id;
            });
  write_manifest(root, entries);
}

}  // namespace gw::synth
