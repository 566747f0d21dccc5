// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>

#include "gaussworld/flow/model.hpp"

namespace gw::flow {

/// One rectified-flow training tuple: z_t = (1-t) z0 + t eps exactly, and
/// the regression target is z0 - eps.
template <class T>
struct FlowSample {
  Tensor<T> z0, eps, zt, target;
  double t = 0.5;
};

template <class T>
FlowSample<T> make_flow_sample(const Tensor<T>& z0, Rng& rng,
                               bool logit_normal = false) {
  GW_REQUIRE(z0.all_finite(), "flow sample needs finite z0");
  FlowSample<T> s;
  s.z0 = z0;
  s.eps = Tensor<T>::randn(z0.shape(), rng);
  double t = logit_normal ? 1.0 / (1.0 + std::exp(-rng.normal()))
                          : rng.uniform();
  while (t <= 0.0 || t >= 1.0) t = rng.uniform();
  s.t = t;
  s.zt = Tensor<T>(z0.shape());
  s.target = Tensor<T>(z0.shape());
  for (i64 i = 0; i < z0.numel(); ++i) {
    s.zt[i] = static_cast<T>(1.0 - t) * z0[i] + static_cast<T>(t) * s.eps[i];
    s.target[i] = z0[i] - s.eps[i];
  }
  return s;
}

/// MSE between prediction and (z0 - eps), excluding reference frames
/// (they are given, not predicted). All frames reference -> 0.
template <class T>
ad::Var<T> flow_loss(const ad::Var<T>& pred, const FlowSample<T>& sample,
                     const std::vector<char>& ref_mask) {
  const Shape& s = pred->value.shape();
  GW_REQUIRE(s == sample.target.shape(), "flow_loss shape mismatch");
  GW_REQUIRE(static_cast<i64>(ref_mask.size()) == s[0],
             "flow_loss mask length mismatch");
  i64 n_free = 0;
  for (char c : ref_mask) n_free += (c == 0);
  if (n_free == 0) return ad::constant(Tensor<T>::scalar(T(0)));
  Tensor<T> mask(Shape{s[0], 1, 1, 1, 1});
  for (i64 t = 0; t < s[0]; ++t) mask[t] = ref_mask[t] ? T(0) : T(1);
  const i64 per_frame = s[1] * s[2] * s[3] * s[4];
  auto diff = ad::sub(pred, ad::constant(sample.target));
  auto masked = ad::mul(ad::square(diff), ad::constant(std::move(mask)));
  return ad::scale(ad::sum_all(masked),
                   T(1) / static_cast<T>(n_free * per_frame));
}

/// A denoiser: (z_t, t, conditions) -> predicted (z0 - eps). Lets tests
/// substitute closed-form oracles for the transformer.
template <class T>
using Predictor =
    std::function<Tensor<T>(const Tensor<T>&, double, const ConditionBundle<T>&)>;

template <class T>
Predictor<T> model_predictor(const LatentFlowTransformer<T>& model,
                             double guidance = 1.0) {
  return [&model, guidance](const Tensor<T>& z, double t,
                            const ConditionBundle<T>& cond) {
    auto zin = ad::constant(z);
    if (guidance == 1.0) return model.forward(zin, t, cond)->value;
    ConditionBundle<T> uncond = cond;
    uncond.drop_conditioning = true;
    const Tensor<T> pc = model.forward(zin, t, cond)->value;
    const Tensor<T> pu = model.forward(zin, t, uncond)->value;
    Tensor<T> out(pc.shape());
    for (i64 j = 0; j < out.numel(); ++j)
      out[j] = pu[j] + static_cast<T>(guidance) * (pc[j] - pu[j]);
    return out;
  };
}

/// Euler sampler with reference-frame inpainting. Integrates
/// z_{t-dt} = z_t + dt * predict(z_t, t, cond) from seeded noise at t=1
/// down to t=0; after every step the first n_ref frames are overwritten
/// with their exact interpolants, so they are conserved bitwise at t=0.
template <class T>
Tensor<T> sample(const Predictor<T>& predict, const ConditionBundle<T>& cond,
                 i64 latent_channels, const Tensor<T>* ref_latents, i64 n_ref,
                 i64 steps, u64 seed) {
  GW_REQUIRE(steps >= 1, "sampler needs steps >= 1");
  const i64 Tn = cond.frames(), V = cond.views();
  const i64 h = cond.control.dim(3), w = cond.control.dim(4);
  GW_REQUIRE(n_ref == 0 || ref_latents, "reference latents missing");
  GW_REQUIRE(n_ref <= Tn, "more references than frames");

  ConditionBundle<T> cond_run = cond;
  cond_run.ref_mask.assign(Tn, 0);
  for (i64 i = 0; i < n_ref; ++i) cond_run.ref_mask[i] = 1;

  Rng rng(seed);
  Tensor<T> z = Tensor<T>::randn({Tn, V, latent_channels, h, w}, rng);
  const i64 frame_elems = V * latent_channels * h * w;
  Tensor<T> eps_ref(Shape{std::max<i64>(n_ref, 1), V, latent_channels, h, w});
  for (i64 r = 0; r < n_ref; ++r)
    std::copy_n(z.data() + r * frame_elems, frame_elems,
                eps_ref.data() + r * frame_elems);
  // At t=1 the reference frames already sit on their exact noisy path.

  for (i64 i = steps; i >= 1; --i) {
    const double t = double(i) / double(steps);
    const Tensor<T> pred = predict(z, t, cond_run);
    GW_REQUIRE(pred.shape() == z.shape(), "predictor shape mismatch");
    const T dt = static_cast<T>(1.0 / double(steps));
    for (i64 j = 0; j < z.numel(); ++j) z[j] += dt * pred[j];
    const double tp = double(i - 1) / double(steps);
    for (i64 r = 0; r < n_ref; ++r) {
      T* zr = z.data() + r * frame_elems;
      const T* rr = ref_latents->data() + r * frame_elems;
      const T* er = eps_ref.data() + r * frame_elems;
      if (i == 1) {
        std::copy_n(rr, frame_elems, zr);  // exact conservation at t=0
      } else {
        for (i64 j = 0; j < frame_elems; ++j)
          zr[j] = static_cast<T>(1.0 - tp) * rr[j] + static_cast<T>(tp) * er[j];
      }
    }
  }
  return z;
}

/// Autoregressive long-horizon sampling: each window's first k frames are
/// the previous window's last k generated frames. Returns k + horizon
/// frames (horizon novel frames; must be a multiple of T - k).
template <class T>
Tensor<T> autoregress(const Predictor<T>& predict,
                      const std::vector<ConditionBundle<T>>& windows,
                      i64 latent_channels, const Tensor<T>* ref_latents, i64 k,
                      i64 horizon, i64 steps, u64 seed) {
  GW_REQUIRE(!windows.empty(), "autoregress needs at least one window");
  const i64 Tn = windows[0].frames();
  GW_REQUIRE(k >= 0 && k < Tn, "invalid reference count");
  const i64 novel = Tn - k;
  GW_REQUIRE(horizon % novel == 0,
             "horizon not reachable: must be a multiple of frames-minus-refs");
  const i64 n_windows = horizon / novel;
  GW_REQUIRE(static_cast<i64>(windows.size()) >= n_windows,
             "not enough condition windows for the horizon");
  const i64 V = windows[0].views();
  const i64 h = windows[0].control.dim(3), w = windows[0].control.dim(4);
  const i64 frame_elems = V * latent_channels * h * w;

  const i64 out_frames = k + horizon;
  Tensor<T> out(Shape{out_frames, V, latent_channels, h, w});
  Tensor<T> refs(Shape{std::max<i64>(k, 1), V, latent_channels, h, w});
  if (k > 0) {
    GW_REQUIRE(ref_latents, "reference latents missing");
    std::copy_n(ref_latents->data(), k * frame_elems, refs.data());
    std::copy_n(ref_latents->data(), k * frame_elems, out.data());
  }
  Rng root(seed);
  i64 cursor = k;
  for (i64 wdx = 0; wdx < n_windows; ++wdx) {
    const u64 wseed = root.child(static_cast<u64>(wdx)).next_u64();
    Tensor<T> z = sample(predict, windows[wdx], latent_channels,
                         k > 0 ? &refs : nullptr, k, steps, wseed);
    std::copy_n(z.data() + k * frame_elems, novel * frame_elems,
                out.data() + cursor * frame_elems);
    cursor += novel;
    if (k > 0)
      std::copy_n(z.data() + (Tn - k) * frame_elems, k * frame_elems,
                  refs.data());
  }
  return out;
}

}  // namespace gw::flow
