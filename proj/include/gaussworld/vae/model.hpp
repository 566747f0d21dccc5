// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gaussworld/synth/clip.hpp"
#include "gaussworld/vae/context.hpp"
#include "gaussworld/vae/encoder.hpp"
#include "gaussworld/vae/gs_decoder.hpp"
#include "gaussworld/vae/image_decoder.hpp"
#include "gaussworld/vae/losses.hpp"

namespace gw::vae {

/// Dual-decoder VAE: shared encoder, image reconstruction decoder, and a
/// Gaussian-splatting decoder over context-frame latents.
template <class T>
class DualDecoderVae {
 public:
  DualDecoderVae(u64 seed, const VaeConfig& cfg, i64 image_h, i64 image_w)
      : cfg_(cfg), image_h_(image_h), image_w_(image_w), params_(seed) {
    cfg.validate();
    encoder_ = ConvEncoder<T>(params_, "enc", cfg);
    image_decoder_ = ImageDecoder<T>(params_, "dec", cfg);
    gs_decoder_ = GsDecoder<T>(params_, "gs", cfg, image_h, image_w);
  }

  const VaeConfig& config() const { return cfg_; }
  i64 image_height() const { return image_h_; }
  i64 image_width() const { return image_w_; }
  nn::ParamStore<T>& params() { return params_; }
  const nn::ParamStore<T>& params() const { return params_; }

  /// Encodes a batch of frames [B,3,H,W] in [0,1].
  PosteriorStats<T> encode(const Var<T>& images) const {
    GW_REQUIRE(images->value.dim(2) == image_h_ && images->value.dim(3) == image_w_,
               "encode: image size mismatches model");
    for (i64 i = 0; i < images->value.numel(); ++i)
      GW_REQUIRE(images->value[i] >= T(0) && images->value[i] <= T(1),
                 "encode: images must lie in [0,1]");
    return encoder_(images);
  }

  Var<T> decode_image(const Var<T>& z) const { return image_decoder_(z); }

  const GsDecoder<T>& gs() const { return gs_decoder_; }

  /// HWC float image (t,v) of a clip as an NCHW graph constant.
  static Var<T> frame_constant(const synth::MultiViewClip& clip, i64 t, i64 v) {
    const i64 H = clip.height(), W = clip.width();
    Tensor<T> img(Shape{1, 3, H, W});
    const float* src = clip.image_ptr(t, v);
    for (i64 c = 0; c < 3; ++c)
      for (i64 p = 0; p < H * W; ++p)
        img[c * H * W + p] = static_cast<T>(src[p * 3 + c]);
    return ad::constant(std::move(img));
  }

  static Tensor<T> frame_tensor_chw(const synth::MultiViewClip& clip, i64 t, i64 v) {
    const i64 H = clip.height(), W = clip.width();
    Tensor<T> img(Shape{3, H, W});
    const float* src = clip.image_ptr(t, v);
    for (i64 c = 0; c < 3; ++c)
      for (i64 p = 0; p < H * W; ++p)
        img[c * H * W + p] = static_cast<T>(src[p * 3 + c]);
    return img;
  }

  static Tensor<T> depth_tensor(const synth::MultiViewClip& clip, i64 t, i64 v) {
    const i64 H = clip.height(), W = clip.width();
    Tensor<T> d(Shape{1, H, W});
    const float* src = clip.depth_ptr(t, v);
    for (i64 p = 0; p < H * W; ++p) d[p] = static_cast<T>(src[p]);
    return d;
  }

 private:
  VaeConfig cfg_;
  i64 image_h_, image_w_;
  nn::ParamStore<T> params_;
  ConvEncoder<T> encoder_;
  ImageDecoder<T> image_decoder_;
  GsDecoder<T> gs_decoder_;
};

}  // namespace gw::vae
