// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>
#include <cstring>

#include "gaussworld/flow/flow.hpp"
#include "helpers.hpp"

using namespace gw;
using namespace gw::flow;

namespace {

FlowConfig tiny_cfg() {
  FlowConfig cfg;
  cfg.units = 2;
  cfg.width = 48;
  cfg.heads = 4;
  cfg.patch = 2;
  cfg.latent_channels = 4;
  cfg.max_frames = 24;
  return cfg;
}

template <class T>
ConditionBundle<T> make_cond(Rng& rng, i64 Tn, i64 V, i64 h, i64 w,
                             i64 n_ref = 0) {
  ConditionBundle<T> c;
  c.control = Tensor<T>::uniform({Tn, V, 2, h, w}, rng, T(0), T(1));
  c.text_tokens = {0, 3, 5};
  c.ref_mask.assign(Tn, 0);
  for (i64 i = 0; i < n_ref; ++i) c.ref_mask[i] = 1;
  c.view_valid.assign(V, 1);
  return c;
}

}  // namespace

TEST_CASE("reshape index formulas and bit-exact round trips") {
  Rng rng(3);
  // property over random small shapes
  for (int trial = 0; trial < 12; ++trial) {
    const i64 Tn = 1 + rng.below(5), V = 1 + rng.below(4);
    const i64 C = 1 + rng.below(4), h = 1 + rng.below(5), w = 1 + rng.below(5);
    Tensor<double> z = Tensor<double>::randn({Tn, V, C, h, w}, rng);
    auto zv = ad::constant(z);

    auto sp = reshape_spatial(zv);
    REQUIRE(sp->value.shape() == Shape({Tn * V, h * w, C}));
    // index formula: (t,v,c,y,x) -> sequence t*V+v, token y*w+x
    for (int k = 0; k < 20; ++k) {
      const i64 t = rng.below(Tn), v = rng.below(V), c = rng.below(C);
      const i64 y = rng.below(h), x = rng.below(w);
      REQUIRE(sp->value[((t * V + v) * (h * w) + y * w + x) * C + c] ==
              z[(((t * V + v) * C + c) * h + y) * w + x]);
    }
    auto back = unreshape_spatial(sp, z.shape());
    REQUIRE(std::memcmp(back->value.data(), z.data(),
                        z.numel() * sizeof(double)) == 0);

    auto tm = reshape_temporal(zv);
    REQUIRE(tm->value.shape() == Shape({V * h * w, Tn, C}));
    auto tb = unreshape_temporal(tm, z.shape());
    REQUIRE(std::memcmp(tb->value.data(), z.data(),
                        z.numel() * sizeof(double)) == 0);

    auto cv = reshape_crossview(zv);
    REQUIRE(cv->value.shape() == Shape({Tn * h * w, V, C}));
    auto cb = unreshape_crossview(cv, z.shape());
    REQUIRE(std::memcmp(cb->value.data(), z.data(),
                        z.numel() * sizeof(double)) == 0);

    // composing all three round trips in arbitrary order stays exact
    auto mixed = unreshape_crossview(
        reshape_crossview(unreshape_temporal(reshape_temporal(zv), z.shape())),
        z.shape());
    REQUIRE(std::memcmp(mixed->value.data(), z.data(),
                        z.numel() * sizeof(double)) == 0);
  }
  // paper-scale arithmetic: T=19,V=6,h=w=16 -> 1536 temporal sequences
  Tensor<float> big(Shape{19, 6, 1, 16, 16});
  auto tm = reshape_temporal(ad::constant(big));
  REQUIRE(tm->value.dim(0) == 1536);
  REQUIRE(tm->value.dim(1) == 19);
}

TEST_CASE("flow sample invariants") {
  Rng rng(5);
  Tensor<float> z0 = Tensor<float>::randn({3, 2, 4, 4, 4}, rng);
  Rng srng(9);
  auto s = make_flow_sample(z0, srng);
  REQUIRE(s.t > 0.0);
  REQUIRE(s.t < 1.0);
  for (i64 i = 0; i < z0.numel(); ++i) {
    REQUIRE_THAT(double(s.zt[i]),
                 Catch::Matchers::WithinAbs(
                     (1 - s.t) * double(z0[i]) + s.t * double(s.eps[i]), 1e-6));
    REQUIRE_THAT(double(s.target[i] + s.eps[i]),
                 Catch::Matchers::WithinAbs(double(z0[i]), 1e-6));
  }
}

TEST_CASE("flow_loss: oracle, offset, and all-reference cases") {
  Rng rng(7);
  Tensor<double> z0 = Tensor<double>::randn({4, 2, 3, 2, 2}, rng);
  Rng srng(11);
  auto s = make_flow_sample(z0, srng);
  std::vector<char> no_ref(4, 0);

  auto l0 = flow_loss(ad::constant(s.target), s, no_ref);
  REQUIRE_THAT(l0->value[0], Catch::Matchers::WithinAbs(0.0, 1e-15));

  Tensor<double> off = s.target;
  for (i64 i = 0; i < off.numel(); ++i) off[i] += 0.3;
  auto lc = flow_loss(ad::constant(off), s, no_ref);
  REQUIRE_THAT(lc->value[0], Catch::Matchers::WithinAbs(0.09, 1e-12));

  std::vector<char> all_ref(4, 1);
  auto la = flow_loss(ad::constant(off), s, all_ref);
  REQUIRE(la->value[0] == 0.0);

  // masking rule: only non-reference frames contribute
  std::vector<char> half = {1, 1, 0, 0};
  Tensor<double> mixed = s.target;
  const i64 fe = 2 * 3 * 2 * 2;
  for (i64 i = 0; i < 2 * fe; ++i) mixed[i] += 100.0;  // ref frames: ignored
  auto lm = flow_loss(ad::constant(mixed), s, half);
  REQUIRE_THAT(lm->value[0], Catch::Matchers::WithinAbs(0.0, 1e-15));
}

TEST_CASE("forward: shape contract, determinism, timestep domain") {
  FlowConfig cfg = tiny_cfg();
  LatentFlowTransformer<double> model(21, cfg);
  Rng rng(13);
  auto cond = make_cond<double>(rng, 3, 2, 4, 4);
  Tensor<double> z = Tensor<double>::randn({3, 2, 4, 4, 4}, rng);
  auto out1 = model.forward(ad::constant(z), 0.5, cond);
  REQUIRE(out1->value.shape() == z.shape());
  auto out2 = model.forward(ad::constant(z), 0.5, cond);
  REQUIRE(max_abs_diff(out1->value, out2->value) == 0.0);
  // t=1 accepted (sampler start); outside (0,1] rejected
  REQUIRE_NOTHROW(model.forward(ad::constant(z), 1.0, cond));
  REQUIRE_THROWS_AS(model.forward(ad::constant(z), 0.0, cond), Error);
  REQUIRE_THROWS_AS(model.forward(ad::constant(z), 1.2, cond), Error);
}

TEST_CASE("zero-init identity: appended blocks contribute exactly nothing") {
  FlowConfig cfg = tiny_cfg();
  LatentFlowTransformer<double> model(22, cfg);
  Rng rng(17);
  auto cond = make_cond<double>(rng, 4, 3, 4, 4, 1);
  Tensor<double> z = Tensor<double>::randn({4, 3, 4, 4, 4}, rng);
  auto full = model.forward(ad::constant(z), 0.7, cond);
  auto spatial_only = model.forward(ad::constant(z), 0.7, cond, {}, true);
  REQUIRE(max_abs_diff(full->value, spatial_only->value) == 0.0);
}

TEST_CASE("single-view input runs with cross-view blocks skipped") {
  FlowConfig cfg = tiny_cfg();
  LatentFlowTransformer<float> model(23, cfg);
  Rng rng(19);
  auto cond = make_cond<float>(rng, 3, 1, 4, 4);
  Tensor<float> z = Tensor<float>::randn({3, 1, 4, 4, 4}, rng);
  REQUIRE_NOTHROW(model.forward(ad::constant(z), 0.4, cond));
}

namespace {

/// Give the blocks non-trivial gates so equivariance tests are not vacuous.
template <class T>
void randomize_gates(LatentFlowTransformer<T>& model, u64 seed) {
  Rng rng(seed);
  for (auto& [name, p] : model.params().params())
    if (name.find(".ada.") != std::string::npos)
      for (i64 i = 0; i < p->value.numel(); ++i)
        p->value[i] = T(rng.uniform(-0.3, 0.3));
}

}  // namespace

TEST_CASE("view-permutation equivariance of the full forward") {
  FlowConfig cfg = tiny_cfg();
  LatentFlowTransformer<double> model(24, cfg);
  randomize_gates(model, 99);
  Rng rng(23);
  const i64 Tn = 3, V = 3, h = 4, w = 4;
  auto cond = make_cond<double>(rng, Tn, V, h, w, 1);
  Tensor<double> z = Tensor<double>::randn({Tn, V, 4, h, w}, rng);

  const std::vector<i64> perm = {2, 0, 1};
  ConditionBundle<double> cond_p = cond;
  Tensor<double> zp(z.shape());
  const i64 ve = 4 * h * w, ce = 2 * h * w;
  for (i64 t = 0; t < Tn; ++t)
    for (i64 v = 0; v < V; ++v) {
      std::copy_n(z.data() + (t * V + perm[v]) * ve, ve, zp.data() + (t * V + v) * ve);
      std::copy_n(cond.control.data() + (t * V + perm[v]) * ce, ce,
                  cond_p.control.data() + (t * V + v) * ce);
    }
  auto out = model.forward(ad::constant(z), 0.6, cond);
  auto out_p = model.forward(ad::constant(zp), 0.6, cond_p);
  for (i64 t = 0; t < Tn; ++t)
    for (i64 v = 0; v < V; ++v) {
      const double* a = out->value.data() + (t * V + perm[v]) * ve;
      const double* b = out_p->value.data() + (t * V + v) * ve;
      for (i64 i = 0; i < ve; ++i)
        REQUIRE_THAT(b[i], Catch::Matchers::WithinAbs(a[i], 1e-9));
    }
}

TEST_CASE("conditional and unconditional outputs differ") {
  FlowConfig cfg = tiny_cfg();
  LatentFlowTransformer<double> model(25, cfg);
  randomize_gates(model, 7);
  Rng rng(29);
  auto cond = make_cond<double>(rng, 2, 2, 4, 4);
  Tensor<double> z = Tensor<double>::randn({2, 2, 4, 4, 4}, rng);
  auto c = model.forward(ad::constant(z), 0.5, cond);
  ConditionBundle<double> un = cond;
  un.drop_conditioning = true;
  auto u = model.forward(ad::constant(z), 0.5, un);
  REQUIRE(max_abs_diff(c->value, u->value) > 1e-8);
}

TEST_CASE("oracle predictor: exact sampling for any step count") {
  Rng rng(31);
  const i64 Tn = 4, V = 2, C = 4, h = 4, w = 4;
  Tensor<double> z0 = Tensor<double>::randn({Tn, V, C, h, w}, rng);
  auto cond = make_cond<double>(rng, Tn, V, h, w);
  // The oracle knows z0 and inverts the interpolant to recover eps.
  Predictor<double> oracle = [&z0](const Tensor<double>& zt, double t,
                                   const ConditionBundle<double>&) {
    Tensor<double> out(zt.shape());
    for (i64 i = 0; i < zt.numel(); ++i) {
      const double eps = (zt[i] - (1 - t) * z0[i]) / t;
      out[i] = z0[i] - eps;
    }
    return out;
  };
  for (i64 steps : {1, 2, 3, 7, 50}) {
    Tensor<double> z = sample<double>(oracle, cond, C, nullptr, 0, steps, 77);
    REQUIRE(max_abs_diff(z, z0) < 1e-5);
  }
  // oracle predictor gives zero flow loss
  Rng srng(41);
  auto s = make_flow_sample(z0, srng);
  std::vector<char> no_ref(Tn, 0);
  auto l = flow_loss(ad::constant(oracle(s.zt, s.t, cond)), s, no_ref);
  REQUIRE(l->value[0] < 1e-10);
}

TEST_CASE("reference conservation is bitwise") {
  FlowConfig cfg = tiny_cfg();
  LatentFlowTransformer<float> model(26, cfg);
  Rng rng(37);
  const i64 Tn = 5, V = 2, C = 4, h = 4, w = 4;
  auto cond = make_cond<float>(rng, Tn, V, h, w);
  Tensor<float> refs = Tensor<float>::randn({3, V, C, h, w}, rng);
  auto pred = model_predictor(model);
  Tensor<float> z = sample(pred, cond, C, &refs, 3, 4, 123);
  REQUIRE(std::memcmp(z.data(), refs.data(),
                      refs.numel() * sizeof(float)) == 0);
}

TEST_CASE("loss masking: parameter gradients ignore reference targets") {
  FlowConfig cfg = tiny_cfg();
  LatentFlowTransformer<double> model(27, cfg);
  Rng rng(43);
  const i64 Tn = 4, V = 2;
  auto cond = make_cond<double>(rng, Tn, V, 4, 4, 2);
  Tensor<double> z0 = Tensor<double>::randn({Tn, V, 4, 4, 4}, rng);
  Rng srng(47);
  auto s = make_flow_sample(z0, srng);

  auto grads_for = [&](const FlowSample<double>& smp) {
    model.params().zero_grad();
    auto pred = model.forward(ad::constant(smp.zt), smp.t, cond);
    auto loss = flow_loss(pred, smp, cond.ref_mask);
    ad::backward(loss);
    std::map<std::string, Tensor<double>> out;
    for (auto& [name, p] : model.params().params())
      if (p->grad_ready) out[name] = p->grad;
    return out;
  };
  auto g1 = grads_for(s);
  FlowSample<double> s2 = s;
  const i64 fe = V * 4 * 4 * 4;
  for (i64 i = 0; i < 2 * fe; ++i) s2.target[i] += 42.0;  // ref-frame targets
  auto g2 = grads_for(s2);
  REQUIRE(g1.size() == g2.size());
  for (auto& [name, g] : g1)
    REQUIRE(max_abs_diff(g, g2.at(name)) == 0.0);
}

TEST_CASE("autoregress: window arithmetic and overlap identity") {
  Rng rng(53);
  const i64 Tn = 5, V = 2, C = 3, h = 2, w = 2, k = 2;
  Tensor<double> z0 = Tensor<double>::randn({Tn, V, C, h, w}, rng);
  Predictor<double> oracle = [&z0](const Tensor<double>& zt, double t,
                                   const ConditionBundle<double>&) {
    Tensor<double> out(zt.shape());
    for (i64 i = 0; i < zt.numel(); ++i)
      out[i] = z0[i] - (zt[i] - (1 - t) * z0[i]) / t;
    return out;
  };
  std::vector<ConditionBundle<double>> windows;
  Rng crng(59);
  for (int i = 0; i < 3; ++i) windows.push_back(make_cond<double>(crng, Tn, V, h, w));
  Tensor<double> refs(Shape{k, V, C, h, w});
  std::copy_n(z0.data(), refs.numel(), refs.data());

  // horizon = T-k: identical to one sample call
  Tensor<double> one = autoregress(oracle, windows, C, &refs, k, Tn - k, 3, 999);
  Tensor<double> direct = sample(oracle, windows[0], C, &refs, k, 3,
                                 Rng(999).child(0).next_u64());
  REQUIRE(max_abs_diff(one, direct) == 0.0);

  // two iterations -> 2(T-k)+k frames; horizon not multiple -> error
  Tensor<double> two = autoregress(oracle, windows, C, &refs, k, 2 * (Tn - k), 3, 999);
  REQUIRE(two.dim(0) == 2 * (Tn - k) + k);
  REQUIRE_THROWS_WITH(autoregress(oracle, windows, C, &refs, k, Tn - k + 1, 3, 1),
                      Catch::Matchers::ContainsSubstring("horizon"));

  // overlap: first window's output is reproduced in the long output
  for (i64 i = 0; i < (Tn - k + k) * V * C * h * w; ++i)
    REQUIRE(two[i] == one[i]);
}

TEST_CASE("block dropout rates and exclusion rule") {
  FlowConfig cfg = tiny_cfg();
  cfg.p_drop_temporal = 0.1;
  cfg.p_drop_crossview = 0.1;
  Rng rng(61);
  int drop_t = 0, drop_v = 0, both = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    auto m = block_dropout(cfg, rng, 19, 6);
    drop_t += !m.temporal_on;
    drop_v += !m.crossview_on;
    both += (!m.temporal_on && !m.crossview_on);
  }
  REQUIRE(both == 0);
  REQUIRE(std::abs(drop_t / double(n) - 0.1) <= 0.01);
  REQUIRE(drop_v / double(n) > 0.07);
  REQUIRE(drop_v / double(n) < 0.11);

  cfg.p_drop_temporal = 0.0;
  cfg.p_drop_crossview = 0.0;
  for (int i = 0; i < 100; ++i) {
    auto m = block_dropout(cfg, rng, 19, 6);
    REQUIRE(m.temporal_on);
    REQUIRE(m.crossview_on);
  }
  cfg.p_drop_temporal = 1.0;
  for (int i = 0; i < 100; ++i)
    REQUIRE(!block_dropout(cfg, rng, 19, 6).temporal_on);
}

TEST_CASE("forward gradcheck through one unit") {
  FlowConfig cfg = tiny_cfg();
  cfg.units = 1;
  cfg.width = 24;
  cfg.heads = 2;
  LatentFlowTransformer<double> model(28, cfg);
  randomize_gates(model, 5);
  Rng rng(67);
  auto cond = make_cond<double>(rng, 2, 2, 4, 4, 1);
  Tensor<double> z0 = Tensor<double>::randn({2, 2, 4, 4, 4}, rng);
  Rng srng(71);
  auto s = make_flow_sample(z0, srng);

  model.params().zero_grad();
  auto build = [&]() {
    auto pred = model.forward(ad::constant(s.zt), s.t, cond);
    return flow_loss(pred, s, cond.ref_mask);
  };
  auto loss = build();
  ad::backward(loss);
  for (const std::string name :
       {"unit0.temporal.ada.w", "unit0.spatial.attn.qkv.w", "head.w",
        "text_embed", "unit0.temporal.pos"}) {
    auto p = model.params().at(name);
    REQUIRE(p->grad_ready);
    const i64 pick = std::min<i64>(5, p->value.numel() - 1);
    const double ana = p->grad[pick];
    const double h = 1e-6;
    const double orig = p->value[pick];
    p->value[pick] = orig + h;
    const double fp = build()->value[0];
    p->value[pick] = orig - h;
    const double fm = build()->value[0];
    p->value[pick] = orig;
    const double num = (fp - fm) / (2 * h);
    const double denom = std::max({std::abs(num), std::abs(ana), 1e-8});
    INFO(name << ": ana=" << ana << " num=" << num);
    REQUIRE(std::abs(ana - num) / denom < 1e-4);
  }
}
