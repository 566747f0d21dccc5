// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iostream>

#include "gaussworld/harness/metrics.hpp"
#include "gaussworld/vae/model.hpp"

namespace gw::harness {

namespace detail {

/// Cyclic Jacobi eigendecomposition of a symmetric matrix (double).
/// Deterministic sweep order; a [n*n] row-major, eigenvalues out in
/// `eigs`, eigenvectors (columns) in `vecs` when non-null.
inline void jacobi_eigen(std::vector<double>& a, i64 n, std::vector<double>& eigs,
                         std::vector<double>* vecs) {
  if (vecs) {
    vecs->assign(n * n, 0.0);
    for (i64 i = 0; i < n; ++i) (*vecs)[i * n + i] = 1.0;
  }
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (i64 p = 0; p < n; ++p)
      for (i64 q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
    if (off < 1e-24) break;
    for (i64 p = 0; p < n; ++p)
      for (i64 q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a[q * n + q] - a[p * n + p]) / (2 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (i64 k = 0; k < n; ++k) {
          const double akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (i64 k = 0; k < n; ++k) {
          const double apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
        if (vecs)
          for (i64 k = 0; k < n; ++k) {
            const double vkp = (*vecs)[k * n + p], vkq = (*vecs)[k * n + q];
            (*vecs)[k * n + p] = c * vkp - s * vkq;
            (*vecs)[k * n + q] = s * vkp + c * vkq;
          }
      }
  }
  eigs.resize(n);
  for (i64 i = 0; i < n; ++i) eigs[i] = a[i * n + i];
}

struct Gaussian2Moments {
  std::vector<double> mean;  // [d]
  std::vector<double> cov;   // [d*d]
};

inline Gaussian2Moments fit_moments(const std::vector<std::vector<double>>& feats) {
  GW_REQUIRE(feats.size() >= 2, "frechet needs at least 2 samples per side");
  const i64 n = static_cast<i64>(feats.size());
  const i64 d = static_cast<i64>(feats[0].size());
  Gaussian2Moments g;
  g.mean.assign(d, 0.0);
  g.cov.assign(d * d, 0.0);
  for (const auto& f : feats)
    for (i64 i = 0; i < d; ++i) g.mean[i] += f[i];
  for (i64 i = 0; i < d; ++i) g.mean[i] /= double(n);
  for (const auto& f : feats)
    for (i64 i = 0; i < d; ++i)
      for (i64 j = 0; j < d; ++j)
        g.cov[i * d + j] += (f[i] - g.mean[i]) * (f[j] - g.mean[j]);
  for (auto& v : g.cov) v /= double(n - 1);
  return g;
}

}  // namespace detail

/// Frechet distance between two Gaussian fits:
/// d^2 = |mu1-mu2|^2 + tr(S1 + S2 - 2 (S1^{1/2} S2 S1^{1/2})^{1/2}),
/// with symmetric square roots via eigendecomposition, eigenvalues clamped
/// at 0, and a logged ridge when a covariance is singular.
inline double frechet_distance(const std::vector<std::vector<double>>& a,
                               const std::vector<std::vector<double>>& b,
                               std::ostream* log = nullptr) {
  auto ga = detail::fit_moments(a);
  auto gb = detail::fit_moments(b);
  const i64 d = static_cast<i64>(ga.mean.size());
  GW_REQUIRE(static_cast<i64>(gb.mean.size()) == d, "feature width mismatch");

  auto ensure_regular = [&](std::vector<double>& cov, const char* side) {
    std::vector<double> tmp = cov, eigs;
    detail::jacobi_eigen(tmp, d, eigs, nullptr);
    double mn = eigs[0];
    for (double e : eigs) mn = std::min(mn, e);
    if (mn < 1e-10) {
      for (i64 i = 0; i < d; ++i) cov[i * d + i] += 1e-6;
      if (log) *log << "frechet: singular covariance (" << side
                    << "), ridge 1e-6 applied\n";
    }
  };
  ensure_regular(ga.cov, "a");
  ensure_regular(gb.cov, "b");

  double dist = 0;
  for (i64 i = 0; i < d; ++i) {
    const double dm = ga.mean[i] - gb.mean[i];
    dist += dm * dm;
    dist += ga.cov[i * d + i] + gb.cov[i * d + i];
  }

  // S1^{1/2} via eigendecomposition with clamping.
  std::vector<double> work = ga.cov, eigs, vecs;
  detail::jacobi_eigen(work, d, eigs, &vecs);
  std::vector<double> s1h(d * d, 0.0);
  for (i64 i = 0; i < d; ++i)
    for (i64 j = 0; j < d; ++j) {
      double acc = 0;
      for (i64 k = 0; k < d; ++k)
        acc += vecs[i * d + k] * std::sqrt(std::max(0.0, eigs[k])) * vecs[j * d + k];
      s1h[i * d + j] = acc;
    }
  // M = S1h * S2 * S1h (symmetric PSD up to roundoff)
  std::vector<double> tmp(d * d, 0.0), m(d * d, 0.0);
  for (i64 i = 0; i < d; ++i)
    for (i64 j = 0; j < d; ++j) {
      double acc = 0;
      for (i64 k = 0; k < d; ++k) acc += s1h[i * d + k] * gb.cov[k * d + j];
      tmp[i * d + j] = acc;
    }
  for (i64 i = 0; i < d; ++i)
    for (i64 j = 0; j < d; ++j) {
      double acc = 0;
      for (i64 k = 0; k < d; ++k) acc += tmp[i * d + k] * s1h[k * d + j];
      m[i * d + j] = acc;
    }
  // symmetrize against roundoff before the eigensolve
  for (i64 i = 0; i < d; ++i)
    for (i64 j = i + 1; j < d; ++j) {
      const double v = 0.5 * (m[i * d + j] + m[j * d + i]);
      m[i * d + j] = m[j * d + i] = v;
    }
  std::vector<double> meigs;
  detail::jacobi_eigen(m, d, meigs, nullptr);
  for (double e : meigs) dist -= 2.0 * std::sqrt(std::max(0.0, e));
  return std::max(0.0, dist);
}

enum class FrechetMode { image, video };

/// Features from the frozen encoder: spatially pooled posterior means.
/// image mode: one [C] feature per (t, v) frame; video mode: one [T*C]
/// feature per clip (per-frame features pooled over views, concatenated
/// along time).
inline std::vector<std::vector<double>> encoder_features(
    const vae::DualDecoderVae<float>& model,
    const std::vector<synth::MultiViewClip>& clips, FrechetMode mode) {
  std::vector<std::vector<double>> feats;
  const i64 C = model.config().latent_channels;
  for (const auto& clip : clips) {
    const i64 T = clip.frames(), V = clip.views();
    std::vector<double> video_feat;
    for (i64 t = 0; t < T; ++t) {
      std::vector<double> frame_pool(C, 0.0);
      for (i64 v = 0; v < V; ++v) {
        auto stats = model.encode(
            vae::DualDecoderVae<float>::frame_constant(clip, t, v));
        const Tensor<float>& mu = stats.mean->value;  // [1,C,h,w]
        const i64 hw = mu.dim(2) * mu.dim(3);
        if (mode == FrechetMode::image) {
          std::vector<double> f(C, 0.0);
          for (i64 c = 0; c < C; ++c) {
            double acc = 0;
            for (i64 p = 0; p < hw; ++p) acc += mu[c * hw + p];
            f[c] = acc / double(hw);
          }
          feats.push_back(std::move(f));
        } else {
          for (i64 c = 0; c < C; ++c) {
            double acc = 0;
            for (i64 p = 0; p < hw; ++p) acc += mu[c * hw + p];
            frame_pool[c] += acc / double(hw) / double(V);
          }
        }
      }
      if (mode == FrechetMode::video)
        video_feat.insert(video_feat.end(), frame_pool.begin(), frame_pool.end());
    }
    if (mode == FrechetMode::video) feats.push_back(std::move(video_feat));
  }
  return feats;
}

/// Frechet-latent proxy between real and generated clips, in the feature
/// space of a frozen encoder (desk-scale stand-in for FID/FVD).
inline double metric_frechet_latent(const vae::DualDecoderVae<float>& model,
                                    const std::vector<synth::MultiViewClip>& real,
                                    const std::vector<synth::MultiViewClip>& gen,
                                    FrechetMode mode,
                                    std::ostream* log = nullptr) {
  GW_REQUIRE(real.size() >= 2 && gen.size() >= 2,
             "frechet proxy needs at least 2 clips per side");
  auto fa = encoder_features(model, real, mode);
  auto fb = encoder_features(model, gen, mode);
  return frechet_distance(fa, fb, log);
}

}  // namespace gw::harness
