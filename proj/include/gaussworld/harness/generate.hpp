// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gaussworld/core/image_io.hpp"
#include "gaussworld/harness/train_diffusion.hpp"

namespace gw::harness {

/// Decodes latents [T,V,C,h,w] (in normalized diffusion space) back to a
/// clip of images via the VAE image decoder. Camera/annotation metadata is
/// copied from `like`; depth is unknown (+inf).
inline synth::MultiViewClip decode_latents_to_clip(
    const vae::DualDecoderVae<float>& vae_model, const LoadedFlow& flow_ckpt,
    Tensor<float> latents, const synth::MultiViewClip& like,
    const std::string& id) {
  DiffusionTraining::denormalize_latents(latents, flow_ckpt.lat_mean,
                                         flow_ckpt.lat_std);
  const i64 T = latents.dim(0), V = latents.dim(1);
  const i64 C = latents.dim(2), h = latents.dim(3), w = latents.dim(4);
  const i64 H = like.height(), W = like.width();
  synth::MultiViewClip out;
  out.id = id;
  out.timestamps.assign(like.timestamps.begin(), like.timestamps.begin() + T);
  out.view_valid = like.view_valid;
  out.conditions.text_tokens = like.conditions.text_tokens;
  out.conditions.lanes = like.conditions.lanes;
  out.conditions.boxes.assign(like.conditions.boxes.begin(),
                              like.conditions.boxes.begin() + T);
  out.cameras.assign(like.cameras.begin(), like.cameras.begin() + T);
  out.images = Tensor<float>(Shape{T, V, H, W, 3});
  out.depth = Tensor<float>(Shape{T, V, H, W},
                            std::numeric_limits<float>::infinity());
  for (i64 t = 0; t < T; ++t)
    for (i64 v = 0; v < V; ++v) {
      Tensor<float> z(Shape{1, C, h, w});
      std::copy_n(latents.data() + (t * V + v) * C * h * w, C * h * w, z.data());
      auto img = vae_model.decode_image(ad::constant(std::move(z)));
      const Tensor<float>& chw = img->value;  // [1,3,H,W]
      float* dst = out.images.data() + ((t * V + v) * H * W) * 3;
      for (i64 c = 0; c < 3; ++c)
        for (i64 p = 0; p < H * W; ++p) dst[p * 3 + c] = chw[c * H * W + p];
    }
  synth::detail::recompute_rasters(out);
  return out;
}

/// Builds a condition bundle (control rasters at latent resolution, text,
/// validity) for frames [start, start+frames) of a clip.
inline flow::ConditionBundle<float> conditions_for_clip(
    const synth::MultiViewClip& clip, i64 downsample, i64 start, i64 frames) {
  GW_REQUIRE(start + frames <= clip.frames(), "condition window out of range");
  flow::ConditionBundle<float> cond;
  Tensor<float> all = pool_control(clip, downsample);
  const i64 V = clip.views();
  const i64 h = all.dim(3), w = all.dim(4);
  cond.control = Tensor<float>(Shape{frames, V, 2, h, w});
  std::copy_n(all.data() + start * V * 2 * h * w, frames * V * 2 * h * w,
              cond.control.data());
  cond.text_tokens = clip.conditions.text_tokens;
  cond.ref_mask.assign(frames, 0);
  cond.view_valid = clip.view_valid;
  return cond;
}

struct GenerateResult {
  Tensor<float> latents;  // [k+horizon, V, C, h, w], normalized space
  synth::MultiViewClip video;
};

/// Samples a video for one clip's conditions: n_ref reference frames are
/// encoded from the clip; the rest is generated. horizon counts novel
/// frames (window size = clip length).
inline GenerateResult generate_for_clip(
    const vae::DualDecoderVae<float>& vae_model, const LoadedFlow& flow_ckpt,
    const synth::MultiViewClip& clip, i64 n_ref, i64 steps, u64 seed,
    i64 horizon = -1, double guidance = 1.0) {
  const i64 T = clip.frames();
  if (horizon < 0) horizon = T - n_ref;
  GW_REQUIRE(horizon % (T - n_ref) == 0,
             "horizon not reachable with this window size");
  const i64 n_windows = horizon / (T - n_ref);
  GW_REQUIRE(n_ref + horizon <= clip.frames() || n_windows == 1,
             "clip too short for requested horizon");
  const i64 f = vae_model.config().downsample;

  // Encode reference frames to normalized latents.
  Tensor<float> refs;
  if (n_ref > 0) {
    Tensor<float> z = encode_clip_means(vae_model, clip);
    DiffusionTraining::normalize_latents(z, flow_ckpt.lat_mean, flow_ckpt.lat_std);
    const i64 fe = z.dim(1) * z.dim(2) * z.dim(3) * z.dim(4);
    refs = Tensor<float>(Shape{n_ref, z.dim(1), z.dim(2), z.dim(3), z.dim(4)});
    std::copy_n(z.data(), n_ref * fe, refs.data());
  }

  std::vector<flow::ConditionBundle<float>> windows;
  for (i64 wdx = 0; wdx < n_windows; ++wdx)
    windows.push_back(conditions_for_clip(
        clip, f, std::min(wdx * (T - n_ref), clip.frames() - T), T));

  auto predictor = flow::model_predictor(*flow_ckpt.model, guidance);
  GenerateResult out;
  out.latents = flow::autoregress(predictor, windows,
                                  vae_model.config().latent_channels,
                                  n_ref > 0 ? &refs : nullptr, n_ref, horizon,
                                  steps, seed);
  out.video = decode_latents_to_clip(vae_model, flow_ckpt, out.latents, clip,
                                     clip.id + "_gen");
  return out;
}

/// Writes a generated clip as image sequences plus one tiled contact sheet
/// (rows = frames, columns = views).
inline void write_video_files(const synth::MultiViewClip& video,
                              const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const i64 T = video.frames(), V = video.views();
  const i64 H = video.height(), W = video.width();
  for (i64 t = 0; t < T; ++t)
    for (i64 v = 0; v < V; ++v) {
      Tensor<float> img(Shape{H, W, 3});
      std::copy_n(video.image_ptr(t, v), H * W * 3, img.data());
      char name[64];
      std::snprintf(name, sizeof name, "/frame_t%03lld_v%02lld.ppm",
                    static_cast<long long>(t), static_cast<long long>(v));
      write_ppm(dir + name, img);
    }
  Tensor<float> sheet(Shape{T * H, V * W, 3});
  for (i64 t = 0; t < T; ++t)
    for (i64 v = 0; v < V; ++v) {
      const float* src = video.image_ptr(t, v);
      for (i64 y = 0; y < H; ++y)
        for (i64 x = 0; x < W; ++x)
          for (i64 c = 0; c < 3; ++c)
            sheet[((t * H + y) * V * W + v * W + x) * 3 + c] =
                src[(y * W + x) * 3 + c];
    }
  write_ppm(dir + "/contact_sheet.ppm", sheet);
}

}  // namespace gw::harness
