// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gaussworld/harness/generate.hpp"

namespace gw::harness {

/// Sliding 4-frame window starts advancing by 3; the final window start is
/// clamped so the last frames are always covered. Overlapping frames are
/// re-rendered by the later window (last write wins).
inline std::vector<i64> reconstruction_window_starts(i64 frames, i64 window = 4,
                                                     i64 stride = 3) {
  GW_REQUIRE(frames >= window, "reconstruction needs at least 4 frames");
  std::vector<i64> out;
  i64 s = 0;
  while (true) {
    const i64 st = std::min(s, frames - window);
    out.push_back(st);
    if (st >= frames - window) break;
    s += stride;
  }
  return out;
}

struct Recon4dResult {
  Tensor<float> rgb;    // [T,V,3,H,W]
  Tensor<float> depth;  // [T,V,H,W]
  std::vector<i64> window_starts;
};

/// Progressive 4-D reconstruction: feeds overlapping 4-frame windows of
/// latents to the GS decoder with targets equal to the context frames,
/// rendering RGB + depth for every frame and exporting the decoded
/// Gaussians per window when an output directory is given.
///
/// `latents` are VAE-space latents [T,V,C,h,w] (posterior means or
/// denormalized diffusion outputs).
inline Recon4dResult reconstruct4d(const vae::DualDecoderVae<float>& model,
                                   const Tensor<float>& latents,
                                   const std::vector<std::vector<CameraModel>>& cameras,
                                   const std::vector<double>& timestamps,
                                   const std::vector<char>& view_valid,
                                   const std::string& out_dir = "") {
  const i64 T = latents.dim(0), V = latents.dim(1);
  const i64 C = latents.dim(2), h = latents.dim(3), w = latents.dim(4);
  GW_REQUIRE(static_cast<i64>(timestamps.size()) == T &&
                 static_cast<i64>(cameras.size()) == T,
             "latents/cameras/timestamps disagree");
  GW_REQUIRE(C == model.config().latent_channels, "latent channels mismatch");
  const i64 H = model.image_height(), W = model.image_width();

  Recon4dResult res;
  res.rgb = Tensor<float>(Shape{T, V, 3, H, W});
  res.depth = Tensor<float>(Shape{T, V, H, W});
  res.window_starts = reconstruction_window_starts(T);

  namespace fs = std::filesystem;
  if (!out_dir.empty()) fs::create_directories(out_dir);

  std::vector<i64> valid_views;
  for (i64 v = 0; v < V; ++v)
    if (view_valid.empty() || view_valid[v]) valid_views.push_back(v);

  const auto dcfg = model.config().decode_config();
  for (size_t widx = 0; widx < res.window_starts.size(); ++widx) {
    const i64 s = res.window_starts[widx];
    std::vector<vae::GsContextInput<float>> contexts;
    std::vector<vae::GsTargetSpec> targets;
    for (i64 t = s; t < s + 4; ++t)
      for (i64 v : valid_views) {
        Tensor<float> z(Shape{C, h, w});
        std::copy_n(latents.data() + (t * V + v) * C * h * w, C * h * w,
                    z.data());
        contexts.push_back({ad::constant(std::move(z)), cameras[t][v],
                            timestamps[t], v});
        targets.push_back({cameras[t][v], timestamps[t], v});
      }
    auto dec = model.gs()(contexts, targets);
    auto renders = model.gs().render_targets(dec, contexts, targets);
    for (size_t k = 0; k < targets.size(); ++k) {
      const i64 t = s + static_cast<i64>(k) / static_cast<i64>(valid_views.size());
      const i64 v = valid_views[k % valid_views.size()];
      std::copy_n(renders[k].rgb->value.data(), 3 * H * W,
                  res.rgb.data() + (t * V + v) * 3 * H * W);
      std::copy_n(renders[k].depth->value.data(), H * W,
                  res.depth.data() + (t * V + v) * H * W);
    }
    if (!out_dir.empty()) {
      // Gaussian dump, one row per primitive:
      // pos(3) quat(4) scale(3) opacity(1) color(3) velocity(3) time(1).
      std::vector<splat::GaussianSet<float>> sets;
      for (size_t ci = 0; ci < contexts.size(); ++ci)
        sets.push_back(splat::decode_raw(dec.grids[ci]->value,
                                         contexts[ci].camera,
                                         float(contexts[ci].time), dcfg));
      auto merged = splat::merge(sets);
      const i64 n = merged.size();
      Tensor<float> dump(Shape{n, 18});
      for (i64 i = 0; i < n; ++i) {
        float* row = dump.data() + i * 18;
        for (int k = 0; k < 3; ++k) row[k] = merged.positions[i * 3 + k];
        for (int k = 0; k < 4; ++k) row[3 + k] = merged.rotations[i * 4 + k];
        for (int k = 0; k < 3; ++k) row[7 + k] = merged.scales[i * 3 + k];
        row[10] = merged.opacities[i];
        for (int k = 0; k < 3; ++k) row[11 + k] = merged.colors[i * 3 + k];
        for (int k = 0; k < 3; ++k) row[14 + k] = merged.velocities[i * 3 + k];
        row[17] = merged.source_times[i];
      }
      char name[64];
      std::snprintf(name, sizeof name, "/gaussians_w%02zu.gwt", widx);
      write_tensor_file(out_dir + name, dump);
    }
  }

  if (!out_dir.empty()) {
    const double depth_scale = 0.001;  // millimeters per unit
    for (i64 t = 0; t < T; ++t)
      for (i64 v = 0; v < V; ++v) {
        Tensor<float> img(Shape{H, W, 3});
        for (i64 c = 0; c < 3; ++c)
          for (i64 p = 0; p < H * W; ++p)
            img[p * 3 + c] = res.rgb[((t * V + v) * 3 + c) * H * W + p];
        Tensor<float> dep(Shape{H, W});
        std::copy_n(res.depth.data() + (t * V + v) * H * W, H * W, dep.data());
        char name[64];
        std::snprintf(name, sizeof name, "/recon_t%03lld_v%02lld",
                      static_cast<long long>(t), static_cast<long long>(v));
        write_ppm(out_dir + name + ".ppm", img);
        write_pgm16(out_dir + name + "_depth.pgm", dep, depth_scale);
      }
  }
  return res;
}

}  // namespace gw::harness
