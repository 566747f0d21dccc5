// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gaussworld/harness/frechet.hpp"
#include "gaussworld/harness/metrics.hpp"
#include "gaussworld/harness/train_vae.hpp"

namespace gw::harness {

struct VaeEvalResult {
  double recon_psnr = 0;   // image branch on context frames
  double render_psnr = 0;  // GS branch renders at context (t, v)
  double absrel = 0;
  double delta1 = 0;
  double drmse = 0;
  MetricsReport report;
};

/// Evaluates a trained VAE on clips: encodes context frames (posterior
/// means), renders the Gaussian branch back at the context frame-views,
/// and scores depth and RGB against the ray-traced ground truth.
inline VaeEvalResult evaluate_vae(const vae::DualDecoderVae<float>& model,
                                  const std::vector<synth::MultiViewClip>& clips) {
  GW_REQUIRE(!clips.empty(), "evaluate_vae: no clips");
  VaeEvalResult out;
  const auto& vcfg = model.config();
  Rng rng(0);  // context selection is deterministic for 19-frame clips
  for (const auto& clip : clips) {
    auto sel = vae::select_context(clip.frames(), rng);
    std::vector<i64> valid_views;
    for (i64 v = 0; v < clip.views(); ++v)
      if (clip.view_valid[v]) valid_views.push_back(v);

    const i64 H = clip.height(), W = clip.width();
    const i64 h = H / vcfg.downsample, w = W / vcfg.downsample;
    std::vector<vae::GsContextInput<float>> contexts;
    std::vector<float> gt_all, re_all;        // image-branch pairs
    std::vector<float> rgt_all, rre_all;      // render pairs
    std::vector<float> d_gt, d_re, d_mask;

    for (i64 tc : sel.context)
      for (i64 v : valid_views) {
        auto x = vae::DualDecoderVae<float>::frame_constant(clip, tc, v);
        auto stats = model.encode(x);
        auto recon = model.decode_image(stats.mean);
        for (i64 i = 0; i < recon->value.numel(); ++i) {
          gt_all.push_back(x->value[i]);
          re_all.push_back(recon->value[i]);
        }
        contexts.push_back({ad::reshape(stats.mean, {vcfg.latent_channels, h, w}),
                            clip.cameras[tc][v], clip.timestamps[tc], v});
      }
    std::vector<vae::GsTargetSpec> targets;
    for (i64 tc : sel.context)
      for (i64 v : valid_views)
        targets.push_back({clip.cameras[tc][v], clip.timestamps[tc], v});
    auto dec = model.gs()(contexts, targets);
    auto renders = model.gs().render_targets(dec, contexts, targets);
    for (size_t k = 0; k < targets.size(); ++k) {
      const i64 tc = sel.context[k / valid_views.size()];
      const i64 v = valid_views[k % valid_views.size()];
      Tensor<float> gt = vae::DualDecoderVae<float>::frame_tensor_chw(clip, tc, v);
      Tensor<float> gd = vae::DualDecoderVae<float>::depth_tensor(clip, tc, v);
      Tensor<float> m = vae::finite_depth_mask(gd);
      for (i64 i = 0; i < gt.numel(); ++i) {
        rgt_all.push_back(gt[i]);
        rre_all.push_back(renders[k].rgb->value[i]);
      }
      for (i64 i = 0; i < gd.numel(); ++i) {
        d_gt.push_back(gd[i]);
        d_re.push_back(renders[k].depth->value[i]);
        d_mask.push_back(m[i]);
      }
    }
    out.report.add("recon_psnr", clip.id,
                   metric_psnr<float>(gt_all, re_all));
    out.report.add("render_psnr", clip.id,
                   metric_psnr<float>(rgt_all, rre_all));
    out.report.add("absrel", clip.id, metric_absrel<float>(d_gt, d_re, d_mask));
    out.report.add("delta1", clip.id, metric_delta1<float>(d_gt, d_re, d_mask));
    out.report.add("drmse", clip.id, metric_drmse<float>(d_gt, d_re, d_mask));
  }
  out.report.finalize();
  out.recon_psnr = out.report.scalars.at("recon_psnr");
  out.render_psnr = out.report.scalars.at("render_psnr");
  out.absrel = out.report.scalars.at("absrel");
  out.delta1 = out.report.scalars.at("delta1");
  out.drmse = out.report.scalars.at("drmse");
  return out;
}

}  // namespace gw::harness
