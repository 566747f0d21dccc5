// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gaussworld/harness/evaluate.hpp"
#include "gaussworld/harness/generate.hpp"

namespace gw::harness {

struct ProxyPair {
  double image = 0;  // Frechet-latent image proxy (FID analog)
  double video = 0;  // Frechet-latent video proxy (FVD analog)
};

/// Generates one video per validation clip and scores both Frechet-latent
/// proxies against the real validation clips, using a fixed feature
/// encoder shared by every arm under comparison.
inline ProxyPair generation_proxies(const vae::DualDecoderVae<float>& arm_vae,
                                    const LoadedFlow& arm_flow,
                                    const std::vector<synth::MultiViewClip>& val,
                                    const vae::DualDecoderVae<float>& metric_encoder,
                                    i64 n_ref, i64 sample_steps, u64 seed,
                                    std::ostream* log = nullptr) {
  std::vector<synth::MultiViewClip> generated;
  Rng rng(seed);
  for (const auto& clip : val) {
    auto gen = generate_for_clip(arm_vae, arm_flow, clip, n_ref, sample_steps,
                                 rng.child(generated.size()).next_u64());
    generated.push_back(std::move(gen.video));
  }
  ProxyPair p;
  p.image = metric_frechet_latent(metric_encoder, val, generated,
                                  FrechetMode::image, log);
  p.video = metric_frechet_latent(metric_encoder, val, generated,
                                  FrechetMode::video, log);
  return p;
}

struct RefFramesAblation {
  std::map<i64, ProxyPair> by_ref;  // keys 0, 1, 3
  std::string table;
};

/// Reference-frame-count ablation: evaluates generation with 0, 1 and 3
/// reference frames against the validation distribution.
inline RefFramesAblation ablate_ref_frames(
    const vae::DualDecoderVae<float>& arm_vae, const LoadedFlow& arm_flow,
    const std::vector<synth::MultiViewClip>& val,
    const vae::DualDecoderVae<float>& metric_encoder, i64 sample_steps,
    u64 seed, std::ostream* log = nullptr) {
  RefFramesAblation out;
  for (i64 k : {0, 1, 3})
    out.by_ref[k] = generation_proxies(arm_vae, arm_flow, val, metric_encoder,
                                       k, sample_steps, seed ^ (0x9e370 + k), log);
  std::ostringstream os;
  os << "# Ref. frames | FID-proxy | FVD-proxy\n";
  for (i64 k : {0, 1, 3})
    os << k << " | " << out.by_ref[k].image << " | " << out.by_ref[k].video
       << "\n";
  out.table = os.str();
  return out;
}

struct VaeArmAblation {
  ProxyPair plain;  // lambda = 0 (image-only VAE latents)
  ProxyPair recon;  // lambda > 0 (reconstruction-branch VAE latents)
  std::string table;
};

/// Two-arm comparison of diffusion models trained on plain-VAE vs
/// reconstruction-branch-VAE latents. Refuses to compare arms trained for
/// different step counts.
inline VaeArmAblation ablate_vae_arms(
    const vae::DualDecoderVae<float>& plain_vae, const LoadedFlow& plain_flow,
    const vae::DualDecoderVae<float>& recon_vae, const LoadedFlow& recon_flow,
    const std::vector<synth::MultiViewClip>& val,
    const vae::DualDecoderVae<float>& metric_encoder, i64 sample_steps,
    u64 seed, i64 n_ref = 0, std::ostream* log = nullptr) {
  GW_REQUIRE(plain_flow.step == recon_flow.step,
             "refusing to compare: arms trained for different step counts");
  // Both arms sample with the same seeds (common random numbers), so an
  // equal-checkpoint self-comparison gives exactly zero difference.
  VaeArmAblation out;
  out.plain = generation_proxies(plain_vae, plain_flow, val, metric_encoder,
                                 n_ref, sample_steps, seed, log);
  out.recon = generation_proxies(recon_vae, recon_flow, val, metric_encoder,
                                 n_ref, sample_steps, seed, log);
  std::ostringstream os;
  os << "VAE used | FID-proxy | FVD-proxy\n";
  os << "plain VAE | " << out.plain.image << " | " << out.plain.video << "\n";
  os << "recon-branch VAE | " << out.recon.image << " | " << out.recon.video
     << "\n";
  out.table = os.str();
  return out;
}

/// Margin rule shared by the directional checks: the mean per-seed
/// difference must be positive and exceed the across-seed sample standard
/// deviation of the differences.
inline bool margin_exceeds_seed_std(const std::vector<double>& diffs,
                                    double* mean_out = nullptr,
                                    double* std_out = nullptr) {
  GW_REQUIRE(diffs.size() >= 2, "margin rule needs >= 2 seeds");
  double mean = 0;
  for (double d : diffs) mean += d;
  mean /= double(diffs.size());
  double var = 0;
  for (double d : diffs) var += (d - mean) * (d - mean);
  var /= double(diffs.size() - 1);
  const double sd = std::sqrt(var);
  if (mean_out) *mean_out = mean;
  if (std_out) *std_out = sd;
  return mean > 0 && mean > sd;
}

}  // namespace gw::harness
