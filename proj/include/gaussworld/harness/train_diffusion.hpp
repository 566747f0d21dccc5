// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gaussworld/flow/flow.hpp"
#include "gaussworld/harness/train_vae.hpp"

namespace gw::harness {

/// Latents, control rasters, and text tokens for one clip, ready for the
/// diffusion stage (posterior means from the frozen encoder, normalized).
struct ClipLatents {
  Tensor<float> z;        // [T,V,C,h,w], normalized
  Tensor<float> control;  // [T,V,2,h,w]
  std::vector<i64> text_tokens;
  std::vector<char> view_valid;
  std::vector<double> timestamps;
};

/// Average-pools a [T,V,H,W] raster pair down to latent resolution.
inline Tensor<float> pool_control(const synth::MultiViewClip& clip, i64 f) {
  const i64 T = clip.frames(), V = clip.views();
  const i64 H = clip.height(), W = clip.width();
  const i64 h = H / f, w = W / f;
  Tensor<float> out(Shape{T, V, 2, h, w});
  const float* planes[2] = {clip.conditions.box_raster.data(),
                            clip.conditions.lane_raster.data()};
  for (i64 tv = 0; tv < T * V; ++tv)
    for (int c = 0; c < 2; ++c) {
      const float* src = planes[c] + tv * H * W;
      float* dst = out.data() + (tv * 2 + c) * h * w;
      for (i64 y = 0; y < h; ++y)
        for (i64 x = 0; x < w; ++x) {
          double acc = 0;
          for (i64 dy = 0; dy < f; ++dy)
            for (i64 dx = 0; dx < f; ++dx)
              acc += src[(y * f + dy) * W + x * f + dx];
          dst[y * w + x] = static_cast<float>(acc / double(f * f));
        }
    }
  return out;
}

/// Encodes a clip to per-frame posterior means [T,V,C,h,w] (no sampling).
inline Tensor<float> encode_clip_means(const vae::DualDecoderVae<float>& model,
                                       const synth::MultiViewClip& clip) {
  const i64 T = clip.frames(), V = clip.views();
  const i64 f = model.config().downsample;
  const i64 C = model.config().latent_channels;
  const i64 h = clip.height() / f, w = clip.width() / f;
  Tensor<float> z(Shape{T, V, C, h, w});
  for (i64 t = 0; t < T; ++t)
    for (i64 v = 0; v < V; ++v) {
      auto stats =
          model.encode(vae::DualDecoderVae<float>::frame_constant(clip, t, v));
      std::copy_n(stats.mean->value.data(), C * h * w,
                  z.data() + (t * V + v) * C * h * w);
    }
  return z;
}

/// Stage-2 training: rectified-flow transformer over frozen-encoder
/// latents with reference-frame curriculum, block dropout, and
/// classifier-free condition dropout.
class DiffusionTraining {
 public:
  DiffusionTraining(const RunConfig& cfg, const std::string& vae_ckpt_path)
      : cfg_(cfg), root_rng_(cfg.seed()) {
    init_threading();
    cfg_.validate();
    cfg_.set("vae_checkpoint", vae_ckpt_path);
    vae_ = load_vae(vae_ckpt_path);
    fcfg_ = cfg_.flow_config();
    fcfg_.latent_channels = vae_.vcfg.latent_channels;
    model_ = std::make_unique<flow::LatentFlowTransformer<float>>(
        cfg_.seed() ^ 0xd1f, fcfg_);
    opt_.weight_decay = static_cast<float>(cfg_.weight_decay());
    opt_.beta1 = static_cast<float>(cfg_.beta1());
    opt_.beta2 = static_cast<float>(cfg_.beta2());

    synth::DatasetReader reader(cfg_.dataset());
    train_ids_ = reader.ids("train");
    GW_REQUIRE(!train_ids_.empty(), "dataset has no train clips");
    build_latents(reader);
  }

  flow::LatentFlowTransformer<float>& model() { return *model_; }
  const vae::DualDecoderVae<float>& vae_model() const { return *vae_.model; }
  const RunConfig& config() const { return cfg_; }
  const Tensor<float>& latent_mean() const { return lat_mean_; }
  const Tensor<float>& latent_std() const { return lat_std_; }
  const std::map<std::string, ClipLatents>& latents() const { return latents_; }

  double step(i64 step_idx) {
    const std::string id = pick_clip(step_idx);
    try {
      return step_on(step_idx, id);
    } catch (const Error& e) {
      fail("step " + std::to_string(step_idx) + ", clip " + id + ": " +
           e.what());
    }
  }

 private:
  double step_on(i64 step_idx, const std::string& id) {
    const ClipLatents& cl = latents_.at(id);
    Rng rng = root_rng_.child(0xd1ff).child(static_cast<u64>(step_idx));
    model_->params().zero_grad();

    const i64 T = cl.z.dim(0), V = cl.z.dim(1);
    // Reference-count curriculum over {0, 1, 3}.
    const double u = rng.uniform();
    const i64 k = u < 0.3 ? 0 : (u < 0.5 ? 1 : 3);

    flow::ConditionBundle<float> cond;
    cond.control = cl.control;
    cond.text_tokens = cl.text_tokens;
    cond.view_valid = cl.view_valid;
    cond.ref_mask.assign(T, 0);
    for (i64 i = 0; i < std::min(k, T); ++i) cond.ref_mask[i] = 1;
    cond.drop_conditioning = rng.bernoulli(fcfg_.p_cond_drop);

    auto mask = flow::block_dropout(fcfg_, rng, T, V);
    auto fs = flow::make_flow_sample(cl.z, rng,
                                     cfg_.get_b("flow.logit_normal_t", false));
    auto pred = model_->forward(ad::constant(fs.zt), fs.t, cond, mask);
    auto loss = flow::flow_loss(pred, fs, cond.ref_mask);
    const double lv = loss->value[0];
    if (!std::isfinite(lv))
      fail("NaN loss at step " + std::to_string(step_idx) + ", clip " + id);
    if (loss->requires_grad) ad::backward(loss);
    GW_REQUIRE(vae_.model->params().grads_all_zero(),
               "internal assertion failure: encoder gradient nonzero");
    const double lr =
        nn::cosine_lr(cfg_.lr(), cfg_.lr_min(), step_idx, cfg_.max_steps());
    opt_.step(model_->params(), static_cast<float>(lr));
    return lv;
  }

 public:
  void run(std::ostream& log) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg_.out_dir());
    const i64 n = cfg_.max_steps();
    for (i64 s = 0; s < n; ++s) {
      const double loss = step(s);
      if (cfg_.log_every() > 0 && (s % cfg_.log_every() == 0 || s + 1 == n))
        log << "step " << s << " flow_loss " << loss << "\n" << std::flush;
      if (cfg_.checkpoint_every() > 0 && (s + 1) % cfg_.checkpoint_every() == 0)
        save(cfg_.out_dir() + "/checkpoint_" + std::to_string(s + 1) + ".gwck",
             s + 1);
    }
    save(cfg_.out_dir() + "/flow_final.gwck", n);
  }

  void save(const std::string& path, i64 step) const {
    std::map<std::string, Tensor<float>> extra;
    extra.emplace("lat_mean", lat_mean_);
    extra.emplace("lat_std", lat_std_);
    save_checkpoint(path,
                    pack_state(step, cfg_.echo(), model_->params(),
                               const_cast<nn::AdamW<float>*>(&opt_), extra));
  }

 private:
  void build_latents(const synth::DatasetReader& reader) {
    const i64 C = vae_.vcfg.latent_channels;
    const i64 f = vae_.vcfg.downsample;
    // First pass: raw means + accumulate statistics.
    std::vector<double> sum(C, 0.0), sum2(C, 0.0);
    double count = 0;
    for (const auto& id : train_ids_) {
      synth::MultiViewClip clip = reader.open(id);
      ClipLatents cl;
      cl.z = encode_clip_means(*vae_.model, clip);
      cl.control = pool_control(clip, f);
      cl.text_tokens = clip.conditions.text_tokens;
      cl.view_valid = clip.view_valid;
      cl.timestamps = clip.timestamps;
      const i64 hw = cl.z.dim(3) * cl.z.dim(4);
      const i64 tv = cl.z.dim(0) * cl.z.dim(1);
      for (i64 b = 0; b < tv; ++b)
        for (i64 c = 0; c < C; ++c)
          for (i64 p = 0; p < hw; ++p) {
            const double v = cl.z[(b * C + c) * hw + p];
            sum[c] += v;
            sum2[c] += v * v;
          }
      count += double(tv * hw);
      latents_.emplace(id, std::move(cl));
    }
    lat_mean_ = Tensor<float>(Shape{C});
    lat_std_ = Tensor<float>(Shape{C});
    for (i64 c = 0; c < C; ++c) {
      const double mu = sum[c] / count;
      const double var = std::max(1e-12, sum2[c] / count - mu * mu);
      lat_mean_[c] = static_cast<float>(mu);
      lat_std_[c] = static_cast<float>(std::sqrt(var));
    }
    for (auto& [id, cl] : latents_) normalize_latents(cl.z, lat_mean_, lat_std_);
  }

  std::string pick_clip(i64 step_idx) {
    const i64 n = static_cast<i64>(train_ids_.size());
    const i64 epoch = step_idx / n;
    if (epoch != shuffled_epoch_) {
      order_ = train_ids_;
      Rng r = root_rng_.child(0x0e0d).child(static_cast<u64>(epoch));
      for (i64 i = static_cast<i64>(order_.size()) - 1; i > 0; --i)
        std::swap(order_[i], order_[r.below(i + 1)]);
      shuffled_epoch_ = epoch;
    }
    return order_[step_idx % n];
  }

 public:
  static void normalize_latents(Tensor<float>& z, const Tensor<float>& mean,
                                const Tensor<float>& std) {
    const i64 C = mean.numel();
    const i64 hw = z.dim(3) * z.dim(4);
    const i64 tv = z.dim(0) * z.dim(1);
    for (i64 b = 0; b < tv; ++b)
      for (i64 c = 0; c < C; ++c)
        for (i64 p = 0; p < hw; ++p)
          z[(b * C + c) * hw + p] = (z[(b * C + c) * hw + p] - mean[c]) / std[c];
  }

  static void denormalize_latents(Tensor<float>& z, const Tensor<float>& mean,
                                  const Tensor<float>& std) {
    const i64 C = mean.numel();
    const i64 hw = z.dim(3) * z.dim(4);
    const i64 tv = z.dim(0) * z.dim(1);
    for (i64 b = 0; b < tv; ++b)
      for (i64 c = 0; c < C; ++c)
        for (i64 p = 0; p < hw; ++p)
          z[(b * C + c) * hw + p] = z[(b * C + c) * hw + p] * std[c] + mean[c];
  }

 private:
  RunConfig cfg_;
  flow::FlowConfig fcfg_;
  LoadedVae vae_;
  std::unique_ptr<flow::LatentFlowTransformer<float>> model_;
  nn::AdamW<float> opt_;
  Rng root_rng_;
  std::vector<std::string> train_ids_, order_;
  i64 shuffled_epoch_ = -1;
  std::map<std::string, ClipLatents> latents_;
  Tensor<float> lat_mean_, lat_std_;
};

struct LoadedFlow {
  RunConfig cfg;
  flow::FlowConfig fcfg;
  std::unique_ptr<flow::LatentFlowTransformer<float>> model;
  Tensor<float> lat_mean, lat_std;
  i64 step = 0;
};

inline LoadedFlow load_flow(const std::string& ckpt_path) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  LoadedFlow out;
  out.cfg = RunConfig::from_string(ckpt.config_echo);
  out.fcfg = out.cfg.flow_config();
  out.model = std::make_unique<flow::LatentFlowTransformer<float>>(
      out.cfg.seed() ^ 0xd1f, out.fcfg);
  unpack_state(ckpt, out.model->params());
  out.lat_mean = ckpt.tensors.at("meta.lat_mean");
  out.lat_std = ckpt.tensors.at("meta.lat_std");
  out.step = ckpt.step;
  return out;
}

}  // namespace gw::harness
