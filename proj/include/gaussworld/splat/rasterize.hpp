// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "gaussworld/core/threading.hpp"
#include "gaussworld/splat/gaussian.hpp"

namespace gw::splat {

struct RasterizeConfig {
  double near_plane = 0.1;     // camera-frame z cull
  double alpha_clamp = 0.999;  // per-splat alpha ceiling
  double cond_max = 1e8;       // screen-covariance condition-number skip
  double eps_alpha = 1e-6;     // depth normalization floor
  // Tiled path only: per-Gaussian footprint is cut where its alpha falls
  // below this; the brute-force oracle has no footprint cutoff. The
  // default sits far below eps_alpha because the normalized depth divides
  // truncation error by eps_alpha at nearly-empty pixels.
  double footprint_alpha = 1e-16;
  double trans_stop = 1e-10;  // tiled path early termination
  i64 tile = 16;
};

template <class T>
struct RenderOutput {
  Tensor<T> rgb;    // [H,W,3] in [0,1]
  Tensor<T> depth;  // [H,W] alpha-weighted ray distance
  Tensor<T> alpha;  // [H,W] in [0,1]
  i64 skipped_degenerate = 0;
};

namespace detail {

/// Per-Gaussian projection state shared by the tiled rasterizer, the
/// brute-force oracle, and the backward pass, so all three use one
/// mathematical definition.
template <class T>
struct Projected {
  T u, v;                 // 2-D mean, pixel coords
  T ia, ib, ic;           // inverse screen covariance [[ia,ib],[ib,ic]]
  T cov_a, cov_b, cov_c;  // screen covariance entries
  T zsort;                // camera-frame z (sort key)
  T zdist;                // Euclidean distance to center (depth value)
  T pcam[3];
  T opacity;
  T color[3];
  T radius;  // footprint radius (tiled path)
  i32 x0, x1, y0, y1;  // inclusive pixel bbox (tiled path)
  bool ok = false;
};

template <class T>
struct ProjectionCache {
  std::vector<Projected<T>> proj;  // indexed by original Gaussian id
  std::vector<i32> order;          // included ids, sorted front to back
  i64 skipped_degenerate = 0;
};

template <class T>
ProjectionCache<T> project_all(const GaussianSet<T>& g, const CameraModel& cam,
                               const RasterizeConfig& cfg) {
  cam.validate();
  const i64 n = g.size();
  ProjectionCache<T> cache;
  cache.proj.resize(n);
  const Mat3 rm = cam.rot_matrix();
  T R[9];
  for (int i = 0; i < 9; ++i) R[i] = static_cast<T>(rm.m[i]);
  const T tx = static_cast<T>(cam.translation.x);
  const T ty = static_cast<T>(cam.translation.y);
  const T tz = static_cast<T>(cam.translation.z);
  const T fx = static_cast<T>(cam.fx), fy = static_cast<T>(cam.fy);
  const T cx = static_cast<T>(cam.cx), cy = static_cast<T>(cam.cy);
  const i64 W = cam.width, H = cam.height;
  i64 skipped = 0;

  init_threading();
#pragma omp parallel for schedule(static) reduction(+ : skipped)
  for (i64 i = 0; i < n; ++i) {
    Projected<T>& p = cache.proj[i];
    const T* pos = g.positions.data() + i * 3;
    const T px = R[0] * pos[0] + R[1] * pos[1] + R[2] * pos[2] + tx;
    const T py = R[3] * pos[0] + R[4] * pos[1] + R[5] * pos[2] + ty;
    const T pz = R[6] * pos[0] + R[7] * pos[1] + R[8] * pos[2] + tz;
    if (!(pz > static_cast<T>(cfg.near_plane))) continue;  // near-plane cull
    p.pcam[0] = px;
    p.pcam[1] = py;
    p.pcam[2] = pz;
    p.zsort = pz;
    p.zdist = std::sqrt(px * px + py * py + pz * pz);
    p.u = fx * px / pz + cx;
    p.v = fy * py / pz + cy;

    // World covariance via the unit-quaternion rotation, then camera frame.
    const T* q = g.rotations.data() + i * 4;
    const T w = q[0], x = q[1], y = q[2], z = q[3];
    T Rg[9];
    Rg[0] = 1 - 2 * (y * y + z * z);
    Rg[1] = 2 * (x * y - w * z);
    Rg[2] = 2 * (x * z + w * y);
    Rg[3] = 2 * (x * y + w * z);
    Rg[4] = 1 - 2 * (x * x + z * z);
    Rg[5] = 2 * (y * z - w * x);
    Rg[6] = 2 * (x * z - w * y);
    Rg[7] = 2 * (y * z + w * x);
    Rg[8] = 1 - 2 * (x * x + y * y);
    // M = R * Rg (3x3)
    T M[9];
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        M[r * 3 + c] = R[r * 3 + 0] * Rg[0 * 3 + c] +
                       R[r * 3 + 1] * Rg[1 * 3 + c] +
                       R[r * 3 + 2] * Rg[2 * 3 + c];
    const T* s = g.scales.data() + i * 3;
    const T s2[3] = {s[0] * s[0], s[1] * s[1], s[2] * s[2]};
    // Sigma_cam = M diag(s2) M^T
    T S[9];
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        S[r * 3 + c] = M[r * 3 + 0] * s2[0] * M[c * 3 + 0] +
                       M[r * 3 + 1] * s2[1] * M[c * 3 + 1] +
                       M[r * 3 + 2] * s2[2] * M[c * 3 + 2];
    // Perspective Jacobian (2x3)
    const T iz = T(1) / pz;
    const T iz2 = iz * iz;
    const T J[6] = {fx * iz, T(0), -fx * px * iz2,
                    T(0),    fy * iz, -fy * py * iz2};
    // Sigma2 = J S J^T
    T JS[6];
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 3; ++c)
        JS[r * 3 + c] = J[r * 3 + 0] * S[0 * 3 + c] +
                        J[r * 3 + 1] * S[1 * 3 + c] + J[r * 3 + 2] * S[2 * 3 + c];
    const T a = JS[0] * J[0] + JS[1] * J[1] + JS[2] * J[2];
    const T b = JS[0] * J[3] + JS[1] * J[4] + JS[2] * J[5];
    const T c = JS[3] * J[3] + JS[4] * J[4] + JS[5] * J[5];
    const T det = a * c - b * b;
    const T tr = a + c;
    const T disc = std::sqrt(std::max(T(0), tr * tr - T(4) * det));
    const T lmax = (tr + disc) / T(2);
    const T lmin = (tr - disc) / T(2);
    if (!(det > T(0)) || !(lmin > T(0)) ||
        lmax / lmin > static_cast<T>(cfg.cond_max) || !std::isfinite(double(det))) {
      ++skipped;  // degenerate screen covariance
      continue;
    }
    p.cov_a = a;
    p.cov_b = b;
    p.cov_c = c;
    p.ia = c / det;
    p.ib = -b / det;
    p.ic = a / det;
    p.opacity = g.opacities[i];
    p.color[0] = g.colors[i * 3 + 0];
    p.color[1] = g.colors[i * 3 + 1];
    p.color[2] = g.colors[i * 3 + 2];
    // Footprint: where opacity * exp(-q/2) >= footprint_alpha.
    const double o = double(p.opacity);
    const double qmax = 2.0 * (std::log(std::max(o, 1e-300)) -
                               std::log(cfg.footprint_alpha));
    p.radius = qmax > 0 ? static_cast<T>(std::sqrt(qmax * double(lmax))) : T(-1);
    if (p.radius >= T(0)) {
      p.x0 = static_cast<i32>(std::max<i64>(0, i64(std::floor(double(p.u - p.radius)))));
      p.x1 = static_cast<i32>(std::min<i64>(W - 1, i64(std::ceil(double(p.u + p.radius)))));
      p.y0 = static_cast<i32>(std::max<i64>(0, i64(std::floor(double(p.v - p.radius)))));
      p.y1 = static_cast<i32>(std::min<i64>(H - 1, i64(std::ceil(double(p.v + p.radius)))));
    } else {
      p.x0 = p.y0 = 0;
      p.x1 = p.y1 = -1;
    }
    p.ok = true;
  }
  cache.skipped_degenerate = skipped;

  cache.order.reserve(n);
  for (i64 i = 0; i < n; ++i)
    if (cache.proj[i].ok) cache.order.push_back(static_cast<i32>(i));
  std::sort(cache.order.begin(), cache.order.end(), [&](i32 a, i32 b) {
    const T za = cache.proj[a].zsort, zb = cache.proj[b].zsort;
    return za < zb || (za == zb && a < b);  // stable tie-break by index
  });
  return cache;
}

template <class T>
inline T splat_alpha(const Projected<T>& p, T px, T py, const RasterizeConfig& cfg,
                     T& g_out, T& q_out) {
  const T dx = px - p.u;
  const T dy = py - p.v;
  const T q = p.ia * dx * dx + T(2) * p.ib * dx * dy + p.ic * dy * dy;
  q_out = q;
  g_out = std::exp(-q / T(2));
  return std::min(p.opacity * g_out, static_cast<T>(cfg.alpha_clamp));
}

}  // namespace detail

/// Brute-force reference renderer: every pixel composites every included
/// Gaussian in front-to-back order with no tiling and no footprint cutoff.
/// Shares the projection, culling, clamping, and sorting definitions with
/// the tiled rasterizer.
template <class T>
RenderOutput<T> oracle_render(const GaussianSet<T>& g, const CameraModel& cam,
                              const RasterizeConfig& cfg = {}) {
  const auto cache = detail::project_all(g, cam, cfg);
  const i64 H = cam.height, W = cam.width;
  RenderOutput<T> out;
  out.rgb = Tensor<T>(Shape{H, W, 3});
  out.depth = Tensor<T>(Shape{H, W});
  out.alpha = Tensor<T>(Shape{H, W});
  out.skipped_degenerate = cache.skipped_degenerate;
#pragma omp parallel for schedule(static)
  for (i64 pix = 0; pix < H * W; ++pix) {
    const T px = static_cast<T>(pix % W);
    const T py = static_cast<T>(pix / W);
    T C[3] = {T(0), T(0), T(0)};
    T A = T(0), N = T(0), trans = T(1);
    for (i32 id : cache.order) {
      const auto& p = cache.proj[id];
      T gk, qk;
      const T a = detail::splat_alpha(p, px, py, cfg, gk, qk);
      const T w = a * trans;
      C[0] += p.color[0] * w;
      C[1] += p.color[1] * w;
      C[2] += p.color[2] * w;
      A += w;
      N += p.zdist * w;
      trans *= (T(1) - a);
    }
    for (int k = 0; k < 3; ++k)
      out.rgb[pix * 3 + k] = std::clamp(C[k], T(0), T(1));
    out.depth[pix] = N / std::max(A, static_cast<T>(cfg.eps_alpha));
    out.alpha[pix] = A;
  }
  return out;
}

namespace detail {

template <class T>
struct TileBins {
  i64 tiles_x = 0, tiles_y = 0;
  std::vector<std::vector<i32>> bins;  // per tile, ids in sorted order
};

template <class T>
TileBins<T> build_bins(const ProjectionCache<T>& cache, i64 H, i64 W, i64 tile) {
  TileBins<T> tb;
  tb.tiles_x = (W + tile - 1) / tile;
  tb.tiles_y = (H + tile - 1) / tile;
  tb.bins.assign(tb.tiles_x * tb.tiles_y, {});
  for (i32 id : cache.order) {
    const auto& p = cache.proj[id];
    if (p.x1 < p.x0 || p.y1 < p.y0) continue;
    const i64 tx0 = p.x0 / tile, tx1 = p.x1 / tile;
    const i64 ty0 = p.y0 / tile, ty1 = p.y1 / tile;
    for (i64 ty = ty0; ty <= ty1; ++ty)
      for (i64 tx = tx0; tx <= tx1; ++tx)
        tb.bins[ty * tb.tiles_x + tx].push_back(id);
  }
  return tb;
}

}  // namespace detail

/// Tiled differentiable rasterizer. Identical math to oracle_render; the
/// only differences are per-Gaussian footprint truncation (footprint_alpha)
/// and early termination once transmittance is below trans_stop.
template <class T>
RenderOutput<T> rasterize(const GaussianSet<T>& g, const CameraModel& cam,
                          const RasterizeConfig& cfg = {},
                          detail::ProjectionCache<T>* cache_out = nullptr) {
  auto cache = detail::project_all(g, cam, cfg);
  const i64 H = cam.height, W = cam.width;
  RenderOutput<T> out;
  out.rgb = Tensor<T>(Shape{H, W, 3});
  out.depth = Tensor<T>(Shape{H, W});
  out.alpha = Tensor<T>(Shape{H, W});
  out.skipped_degenerate = cache.skipped_degenerate;
  const auto bins = detail::build_bins(cache, H, W, cfg.tile);

#pragma omp parallel for schedule(static)
  for (i64 tix = 0; tix < static_cast<i64>(bins.bins.size()); ++tix) {
    const auto& ids = bins.bins[tix];
    const i64 ty = tix / bins.tiles_x, tx = tix % bins.tiles_x;
    const i64 yb = ty * cfg.tile, xb = tx * cfg.tile;
    const i64 ye = std::min(H, yb + cfg.tile), xe = std::min(W, xb + cfg.tile);
    for (i64 y = yb; y < ye; ++y)
      for (i64 x = xb; x < xe; ++x) {
        T C[3] = {T(0), T(0), T(0)};
        T A = T(0), N = T(0), trans = T(1);
        for (i32 id : ids) {
          const auto& p = cache.proj[id];
          if (x < p.x0 || x > p.x1 || y < p.y0 || y > p.y1) continue;
          T gk, qk;
          const T a = detail::splat_alpha(p, static_cast<T>(x), static_cast<T>(y), cfg, gk, qk);
          const T w = a * trans;
          C[0] += p.color[0] * w;
          C[1] += p.color[1] * w;
          C[2] += p.color[2] * w;
          A += w;
          N += p.zdist * w;
          trans *= (T(1) - a);
          if (trans < static_cast<T>(cfg.trans_stop)) break;
        }
        const i64 pix = y * W + x;
        for (int k = 0; k < 3; ++k)
          out.rgb[pix * 3 + k] = std::clamp(C[k], T(0), T(1));
        out.depth[pix] = N / std::max(A, static_cast<T>(cfg.eps_alpha));
        out.alpha[pix] = A;
      }
  }
  if (cache_out) *cache_out = std::move(cache);
  return out;
}

/// Gradients of rasterize() with respect to every continuous Gaussian
/// field. `grad_rgb/grad_depth/grad_alpha` are the upstream gradients;
/// outputs are accumulated (+=) into the g_* tensors, which must be
/// pre-sized ([N,3],[N,4],[N,3],[N],[N,3]).
template <class T>
void rasterize_backward(const GaussianSet<T>& g, const CameraModel& cam,
                        const RasterizeConfig& cfg,
                        const detail::ProjectionCache<T>& cache,
                        const Tensor<T>& grad_rgb, const Tensor<T>& grad_depth,
                        const Tensor<T>& grad_alpha, Tensor<T>& g_pos,
                        Tensor<T>& g_quat, Tensor<T>& g_scale, Tensor<T>& g_op,
                        Tensor<T>& g_color) {
  const i64 H = cam.height, W = cam.width;
  const i64 n = g.size();
  const auto bins = detail::build_bins(cache, H, W, cfg.tile);
  init_threading();
  const int nt = thread_count();

  // Per-(pixel,Gaussian) contributions are accumulated into per-thread
  // buffers of 10 slots per Gaussian: du, dv, dMinv(3), dzdist, dop, dcolor(3).
  std::vector<std::vector<T>> partials(nt, std::vector<T>(n * 10, T(0)));

#pragma omp parallel num_threads(nt)
  {
    const int tid = omp_get_thread_num();
    T* acc = partials[tid].data();
#pragma omp for schedule(static)
    for (i64 tix = 0; tix < static_cast<i64>(bins.bins.size()); ++tix) {
      const auto& ids = bins.bins[tix];
      if (ids.empty()) continue;
      const i64 ty = tix / bins.tiles_x, tx = tix % bins.tiles_x;
      const i64 yb = ty * cfg.tile, xb = tx * cfg.tile;
      const i64 ye = std::min(H, yb + cfg.tile), xe = std::min(W, xb + cfg.tile);
      for (i64 y = yb; y < ye; ++y)
        for (i64 x = xb; x < xe; ++x) {
          const i64 pix = y * W + x;
          const T gr[3] = {grad_rgb[pix * 3], grad_rgb[pix * 3 + 1],
                           grad_rgb[pix * 3 + 2]};
          const T gd = grad_depth[pix];
          const T ga_in = grad_alpha[pix];
          if (gr[0] == T(0) && gr[1] == T(0) && gr[2] == T(0) && gd == T(0) &&
              ga_in == T(0))
            continue;
          // First sweep: recompute this pixel's totals.
          T C_end[3] = {T(0), T(0), T(0)};
          T A_end = T(0), N_end = T(0);
          {
            T trans = T(1);
            for (i32 id : ids) {
              const auto& p = cache.proj[id];
              if (x < p.x0 || x > p.x1 || y < p.y0 || y > p.y1) continue;
              T gk, qk;
              const T a = detail::splat_alpha(p, static_cast<T>(x),
                                              static_cast<T>(y), cfg, gk, qk);
              const T w = a * trans;
              for (int k = 0; k < 3; ++k) C_end[k] += p.color[k] * w;
              A_end += w;
              N_end += p.zdist * w;
              trans *= (T(1) - a);
              if (trans < static_cast<T>(cfg.trans_stop)) break;
            }
          }
          // Chain depth normalization and rgb clamp.
          const T Amax = std::max(A_end, static_cast<T>(cfg.eps_alpha));
          const T dN = gd / Amax;
          T dA = ga_in;
          if (A_end > static_cast<T>(cfg.eps_alpha))
            dA -= gd * N_end / (Amax * Amax);
          T dC[3];
          for (int k = 0; k < 3; ++k)
            dC[k] = (C_end[k] >= T(0) && C_end[k] <= T(1)) ? gr[k] : T(0);

          // Second sweep: suffix trick.
          T trans = T(1);
          T C_acc[3] = {T(0), T(0), T(0)};
          T A_acc = T(0), N_acc = T(0);
          for (i32 id : ids) {
            const auto& p = cache.proj[id];
            if (x < p.x0 || x > p.x1 || y < p.y0 || y > p.y1) continue;
            T gk, qk;
            const T a = detail::splat_alpha(p, static_cast<T>(x),
                                            static_cast<T>(y), cfg, gk, qk);
            const T w = a * trans;
            C_acc[0] += p.color[0] * w;
            C_acc[1] += p.color[1] * w;
            C_acc[2] += p.color[2] * w;
            A_acc += w;
            N_acc += p.zdist * w;
            const T om = T(1) - a;

            T* slot = acc + i64(id) * 10;
            // d out / d color_k and d out / d zdist
            for (int k = 0; k < 3; ++k) slot[7 + k] += dC[k] * w;
            slot[5] += dN * w;
            // d out / d alpha_i via the suffix identity
            T dalpha = dA * (trans - (A_end - A_acc) / om);
            dalpha += dN * (p.zdist * trans - (N_end - N_acc) / om);
            for (int k = 0; k < 3; ++k)
              dalpha += dC[k] * (p.color[k] * trans - (C_end[k] - C_acc[k]) / om);
            const bool clamped = p.opacity * gk > static_cast<T>(cfg.alpha_clamp);
            if (!clamped) {
              slot[6] += dalpha * gk;                 // d/d opacity
              const T dq = -dalpha * p.opacity * gk / T(2);
              const T dx = static_cast<T>(x) - p.u;
              const T dy = static_cast<T>(y) - p.v;
              slot[2] += dq * dx * dx;   // dMinv_00
              slot[3] += dq * dx * dy;   // dMinv_01 (per symmetric entry)
              slot[4] += dq * dy * dy;   // dMinv_11
              const T ddx = dq * (T(2) * p.ia * dx + T(2) * p.ib * dy);
              const T ddy = dq * (T(2) * p.ib * dx + T(2) * p.ic * dy);
              slot[0] -= ddx;  // du
              slot[1] -= ddy;  // dv
            }
            trans *= om;
            if (trans < static_cast<T>(cfg.trans_stop)) break;
          }
        }
    }
  }

  // Deterministic thread reduction, then per-Gaussian chain rule.
  std::vector<T>& total = partials[0];
  for (int t = 1; t < nt; ++t)
    for (i64 i = 0; i < n * 10; ++i) total[i] += partials[t][i];

  const Mat3 rm = cam.rot_matrix();
  T R[9];
  for (int i = 0; i < 9; ++i) R[i] = static_cast<T>(rm.m[i]);
  const T fx = static_cast<T>(cam.fx), fy = static_cast<T>(cam.fy);

#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < n; ++i) {
    const auto& p = cache.proj[i];
    if (!p.ok) continue;
    const T* slot = total.data() + i * 10;
    const T du = slot[0], dv = slot[1];
    const T dm00 = slot[2], dm01 = slot[3], dm11 = slot[4];
    const T dzdist = slot[5], dop = slot[6];
    if (du == T(0) && dv == T(0) && dm00 == T(0) && dm01 == T(0) &&
        dm11 == T(0) && dzdist == T(0) && dop == T(0) && slot[7] == T(0) &&
        slot[8] == T(0) && slot[9] == T(0))
      continue;

    g_op[i] += dop;
    for (int k = 0; k < 3; ++k) g_color[i * 3 + k] += slot[7 + k];

    // dL/dSigma2 = -Minv * G * Minv; the pixel loop accumulated per-entry
    // off-diagonal contributions, so G is used as the full matrix directly.
    const T G00 = dm00, G01 = dm01, G11 = dm11;
    const T ia = p.ia, ib = p.ib, ic = p.ic;
    // S2g = Minv*G: rows of Minv times G
    const T t00 = ia * G00 + ib * G01, t01 = ia * G01 + ib * G11;
    const T t10 = ib * G00 + ic * G01, t11 = ib * G01 + ic * G11;
    // dSigma2 = -(Minv G) Minv
    T dS2[4];
    dS2[0] = -(t00 * ia + t01 * ib);
    dS2[1] = -(t00 * ib + t01 * ic);
    dS2[2] = -(t10 * ia + t11 * ib);
    dS2[3] = -(t10 * ib + t11 * ic);

    // Recompute intermediates of the forward projection.
    const T px = p.pcam[0], py = p.pcam[1], pz = p.pcam[2];
    const T iz = T(1) / pz, iz2 = iz * iz;
    const T J[6] = {fx * iz, T(0), -fx * px * iz2,
                    T(0),    fy * iz, -fy * py * iz2};
    const T* q = g.rotations.data() + i * 4;
    const T w = q[0], x = q[1], y = q[2], z = q[3];
    T Rg[9];
    Rg[0] = 1 - 2 * (y * y + z * z);
    Rg[1] = 2 * (x * y - w * z);
    Rg[2] = 2 * (x * z + w * y);
    Rg[3] = 2 * (x * y + w * z);
    Rg[4] = 1 - 2 * (x * x + z * z);
    Rg[5] = 2 * (y * z - w * x);
    Rg[6] = 2 * (x * z - w * y);
    Rg[7] = 2 * (y * z + w * x);
    Rg[8] = 1 - 2 * (x * x + y * y);
    T M[9];
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        M[r * 3 + c] = R[r * 3 + 0] * Rg[0 * 3 + c] +
                       R[r * 3 + 1] * Rg[1 * 3 + c] +
                       R[r * 3 + 2] * Rg[2 * 3 + c];
    const T* s = g.scales.data() + i * 3;
    const T s2[3] = {s[0] * s[0], s[1] * s[1], s[2] * s[2]};
    T S[9];
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        S[r * 3 + c] = M[r * 3 + 0] * s2[0] * M[c * 3 + 0] +
                       M[r * 3 + 1] * s2[1] * M[c * 3 + 1] +
                       M[r * 3 + 2] * s2[2] * M[c * 3 + 2];

    // dSigma_cam = J^T dS2 J ; dJ = dS2 J Scam^T + dS2^T J Scam
    T dScam[9] = {};
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        dScam[r * 3 + c] = J[0 * 3 + r] * (dS2[0] * J[0 * 3 + c] + dS2[1] * J[1 * 3 + c]) +
                           J[1 * 3 + r] * (dS2[2] * J[0 * 3 + c] + dS2[3] * J[1 * 3 + c]);
    // JS[r][c] = sum_k J[r][k] S[k][c]
    T JS[6];
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 3; ++c)
        JS[r * 3 + c] = J[r * 3 + 0] * S[0 * 3 + c] + J[r * 3 + 1] * S[1 * 3 + c] +
                        J[r * 3 + 2] * S[2 * 3 + c];
    // dJ = dS2 * (J S) + dS2^T * (J S): since S is symmetric, dJ[r][c] =
    // sum_k (dS2[r][k] + dS2[k][r]) * JS[k][c]
    T dJ[6];
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 3; ++c)
        dJ[r * 3 + c] = (dS2[r * 2 + 0] + dS2[0 * 2 + r]) * JS[0 * 3 + c] +
                        (dS2[r * 2 + 1] + dS2[1 * 2 + r]) * JS[1 * 3 + c];

    // dM = (dScam + dScam^T) M diag(s2); dsk = (M^T dScam M)_kk * 2 s_k
    T dM[9];
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        T acc2 = T(0);
        for (int k = 0; k < 3; ++k)
          acc2 += (dScam[r * 3 + k] + dScam[k * 3 + r]) * M[k * 3 + c] * s2[c];
        dM[r * 3 + c] = acc2;
      }
    for (int k = 0; k < 3; ++k) {
      T acc2 = T(0);
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
          acc2 += M[r * 3 + k] * dScam[r * 3 + c] * M[c * 3 + k];
      g_scale[i * 3 + k] += acc2 * T(2) * s[k];
    }
    // dRg = R^T dM
    T dRg[9];
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        dRg[r * 3 + c] = R[0 * 3 + r] * dM[0 * 3 + c] +
                         R[1 * 3 + r] * dM[1 * 3 + c] + R[2 * 3 + r] * dM[2 * 3 + c];
    // Quaternion gradient from the rotation-matrix entries.
    const T g00 = dRg[0], g01 = dRg[1], g02 = dRg[2];
    const T g10 = dRg[3], g11 = dRg[4], g12 = dRg[5];
    const T g20 = dRg[6], g21 = dRg[7], g22 = dRg[8];
    g_quat[i * 4 + 0] += T(2) * (-g01 * z + g02 * y + g10 * z - g12 * x - g20 * y + g21 * x);
    g_quat[i * 4 + 1] += T(2) * (g01 * y + g02 * z + g10 * y - T(2) * g11 * x -
                                 g12 * w + g20 * z + g21 * w - T(2) * g22 * x);
    g_quat[i * 4 + 2] += T(2) * (-T(2) * g00 * y + g01 * x + g02 * w + g10 * x +
                                 g12 * z - g20 * w + g21 * z - T(2) * g22 * y);
    g_quat[i * 4 + 3] += T(2) * (-T(2) * g00 * z - g01 * w + g02 * x + g10 * w -
                                 T(2) * g11 * z + g12 * y + g20 * x + g21 * y);

    // Camera-space position gradient: projection + Jacobian + zdist terms.
    T gX = du * fx * iz;
    T gY = dv * fy * iz;
    T gZ = -du * fx * px * iz2 - dv * fy * py * iz2;
    gX += dJ[2] * (-fx * iz2);
    gY += dJ[5] * (-fy * iz2);
    gZ += dJ[0] * (-fx * iz2) + dJ[4] * (-fy * iz2) +
          dJ[2] * (T(2) * fx * px * iz2 * iz) + dJ[5] * (T(2) * fy * py * iz2 * iz);
    const T invd = T(1) / p.zdist;
    gX += dzdist * px * invd;
    gY += dzdist * py * invd;
    gZ += dzdist * pz * invd;
    // World position: p_cam = R p + t.
    g_pos[i * 3 + 0] += R[0] * gX + R[3] * gY + R[6] * gZ;
    g_pos[i * 3 + 1] += R[1] * gX + R[4] * gY + R[7] * gZ;
    g_pos[i * 3 + 2] += R[2] * gX + R[5] * gY + R[8] * gZ;
  }
}

/// Adds sky behind the composited Gaussians:
/// rgb_final = rgb + (1 - alpha) * sky, clamped to [0,1].
template <class T>
Tensor<T> composite_sky(const RenderOutput<T>& out, const T sky[3]) {
  const i64 hw = out.alpha.numel();
  Tensor<T> rgb(out.rgb.shape());
  for (i64 i = 0; i < hw; ++i) {
    const T bg = T(1) - out.alpha[i];
    for (int k = 0; k < 3; ++k)
      rgb[i * 3 + k] =
          std::clamp(out.rgb[i * 3 + k] + bg * sky[k], T(0), T(1));
  }
  return rgb;
}

/// Per-view exposure: gain * rgb + bias, clamped to [0,1].
template <class T>
Tensor<T> apply_exposure(const Tensor<T>& rgb, T gain, T bias) {
  GW_REQUIRE(std::isfinite(double(gain)) && std::isfinite(double(bias)),
             "exposure parameters must be finite");
  Tensor<T> out(rgb.shape());
  for (i64 i = 0; i < rgb.numel(); ++i)
    out[i] = std::clamp(gain * rgb[i] + bias, T(0), T(1));
  return out;
}

}  // namespace gw::splat
