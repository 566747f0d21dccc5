// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iostream>
#include <memory>
#include <unordered_map>

#include "gaussworld/harness/checkpoint.hpp"
#include "gaussworld/harness/config.hpp"
#include "gaussworld/synth/dataset.hpp"
#include "gaussworld/vae/model.hpp"

namespace gw::harness {

/// Small in-memory clip cache for training loops.
class ClipCache {
 public:
  ClipCache(const synth::DatasetReader* reader, i64 capacity)
      : reader_(reader), capacity_(capacity) {}

  const synth::MultiViewClip& get(const std::string& id) {
    auto it = cache_.find(id);
    if (it != cache_.end()) return it->second;
    if (static_cast<i64>(cache_.size()) >= capacity_) cache_.clear();
    return cache_.emplace(id, reader_->open(id)).first->second;
  }

 private:
  const synth::DatasetReader* reader_;
  i64 capacity_;
  std::unordered_map<std::string, synth::MultiViewClip> cache_;
};

struct StepStats {
  double total = 0, l_vae = 0, l_storm = 0, lr = 0;
  bool storm_active = false;
};

/// Stage-1 training: encoder + image decoder + GS decoder optimized
/// jointly on L_vae + lambda * L_storm. Single-view clips contribute only
/// the image branch.
class VaeTraining {
 public:
  explicit VaeTraining(const RunConfig& cfg)
      : cfg_(cfg), reader_(cfg.dataset()), cache_(&reader_, cfg.get_i("cache_clips", 96)),
        root_rng_(cfg.seed()) {
    init_threading();
    cfg_.validate();
    train_ids_ = reader_.ids("train");
    GW_REQUIRE(!train_ids_.empty(), "dataset has no train clips");
    const auto probe = reader_.open(train_ids_[0]);
    image_h_ = probe.height();
    image_w_ = probe.width();
    vcfg_ = cfg_.vae_config();
    vcfg_.max_views = std::max<i64>(vcfg_.max_views, probe.views());
    if (!cfg_.has("vae.scale_bias")) {
      // Footprint prior: ~0.7 px at a representative mid-range depth.
      const double fx = probe.cameras[0][0].fx;
      const double z_ref = (vcfg_.near + vcfg_.far) / 4.0;
      vcfg_.scale_bias_init = std::log(0.7 * z_ref / fx);
      std::ostringstream os;
      os << vcfg_.scale_bias_init;
      cfg_.set("vae.scale_bias", os.str());
    }
    model_ = std::make_unique<vae::DualDecoderVae<float>>(cfg_.seed(), vcfg_,
                                                          image_h_, image_w_);
    opt_.weight_decay = static_cast<float>(cfg_.weight_decay());
    opt_.beta1 = static_cast<float>(cfg_.beta1());
    opt_.beta2 = static_cast<float>(cfg_.beta2());
    target_views_ = cfg_.get_i("vae.target_views", 0);  // 0 = all views
    depth_keep_ = cfg_.get_f("vae.depth_keep", 1.0);
  }

  vae::DualDecoderVae<float>& model() { return *model_; }
  const RunConfig& config() const { return cfg_; }
  i64 image_height() const { return image_h_; }
  i64 image_width() const { return image_w_; }

  StepStats step(i64 step_idx) {
    const std::string clip_id = pick_clip(step_idx);
    try {
      return step_on(step_idx, clip_id);
    } catch (const Error& e) {
      fail("step " + std::to_string(step_idx) + ", clip " + clip_id + ": " +
           e.what());
    }
  }

 private:
  StepStats step_on(i64 step_idx, const std::string& clip_id) {
    const synth::MultiViewClip& clip = cache_.get(clip_id);
    Rng rng = root_rng_.child(0xbeef).child(static_cast<u64>(step_idx));
    model_->params().zero_grad();

    auto sel = vae::select_context(clip.frames(), rng);
    std::vector<i64> valid_views;
    for (i64 v = 0; v < clip.views(); ++v)
      if (clip.view_valid[v]) valid_views.push_back(v);
    GW_REQUIRE(!valid_views.empty(), "clip has no valid views: " + clip_id);

    // Encode context frames (all valid views), batched.
    const i64 B = static_cast<i64>(sel.context.size() * valid_views.size());
    Tensor<float> batch(Shape{B, 3, image_h_, image_w_});
    i64 bi = 0;
    for (i64 tc : sel.context)
      for (i64 v : valid_views) {
        Tensor<float> f = vae::DualDecoderVae<float>::frame_tensor_chw(clip, tc, v);
        std::copy_n(f.data(), f.numel(), batch.data() + bi * f.numel());
        ++bi;
      }
    auto x = ad::constant(std::move(batch));
    auto stats = model_->encode(x);
    auto z = vae::reparameterize(stats, rng);

    // Image branch on the encoded frames.
    auto xhat = model_->decode_image(z);
    auto l_vae = vae::loss_vae(x, xhat, stats, vcfg_);

    StepStats out;
    ad::Var<float> total;
    const bool multi_view = valid_views.size() > 1;
    if (vcfg_.lambda_storm > 0.0 && multi_view) {
      // Rendering branch: context latents -> Gaussians -> target renders.
      std::vector<vae::GsContextInput<float>> contexts;
      const i64 h = image_h_ / vcfg_.downsample, w = image_w_ / vcfg_.downsample;
      i64 idx = 0;
      for (i64 tc : sel.context)
        for (i64 v : valid_views) {
          auto lat = ad::reshape(ad::slice(z, 0, idx, 1),
                                 {vcfg_.latent_channels, h, w});
          contexts.push_back({lat, clip.cameras[tc][v], clip.timestamps[tc], v});
          ++idx;
        }
      std::vector<vae::GsTargetSpec> targets;
      std::vector<Tensor<float>> gt_rgb, gt_dep, gt_mask;
      for (i64 tt : sel.targets) {
        std::vector<i64> tviews = valid_views;
        if (target_views_ > 0 &&
            target_views_ < static_cast<i64>(tviews.size())) {
          for (i64 i = 0; i < target_views_; ++i) {
            const i64 j = i + rng.below(static_cast<i64>(tviews.size()) - i);
            std::swap(tviews[i], tviews[j]);
          }
          tviews.resize(target_views_);
        }
        for (i64 v : tviews) {
          targets.push_back({clip.cameras[tt][v], clip.timestamps[tt], v});
          gt_rgb.push_back(vae::DualDecoderVae<float>::frame_tensor_chw(clip, tt, v));
          gt_dep.push_back(vae::DualDecoderVae<float>::depth_tensor(clip, tt, v));
          Tensor<float> m = vae::finite_depth_mask(gt_dep.back());
          if (depth_keep_ < 1.0) m = vae::sparsify_mask(m, depth_keep_, rng);
          gt_mask.push_back(std::move(m));
        }
      }
      auto dec = model_->gs()(contexts, targets);
      auto renders = model_->gs().render_targets(dec, contexts, targets,
                                                 &skipped_degenerate_);
      std::vector<ad::Var<float>> rgbs, deps;
      for (auto& r : renders) {
        rgbs.push_back(r.rgb);
        deps.push_back(r.depth);
      }
      auto l_storm = vae::loss_storm(rgbs, gt_rgb, deps, gt_dep, gt_mask, vcfg_);
      total = vae::total_loss(l_vae, l_storm,
                              static_cast<float>(vcfg_.lambda_storm));
      out.l_storm = l_storm->value[0];
      out.storm_active = true;
    } else {
      total = l_vae;
    }
    out.l_vae = l_vae->value[0];
    out.total = total->value[0];
    if (!std::isfinite(out.total))
      fail("NaN loss at step " + std::to_string(step_idx) + ", clip " + clip_id);

    ad::backward(total);
    const double lr = nn::cosine_lr(cfg_.lr(), cfg_.lr_min(), step_idx,
                                    cfg_.max_steps());
    out.lr = lr;
    opt_.step(model_->params(), static_cast<float>(lr));
    return out;
  }

 public:
  void run(std::ostream& log) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg_.out_dir());
    const i64 n = cfg_.max_steps();
    for (i64 s = 0; s < n; ++s) {
      StepStats st = step(s);
      if (cfg_.log_every() > 0 && (s % cfg_.log_every() == 0 || s + 1 == n))
        log << "step " << s << " total " << st.total << " l_vae " << st.l_vae
            << " l_storm " << st.l_storm << " lr " << st.lr << "\n"
            << std::flush;
      if (cfg_.checkpoint_every() > 0 && (s + 1) % cfg_.checkpoint_every() == 0)
        save(cfg_.out_dir() + "/checkpoint_" + std::to_string(s + 1) + ".gwck",
             s + 1);
    }
    save(cfg_.out_dir() + "/vae_final.gwck", n);
  }

  void save(const std::string& path, i64 step) const {
    std::map<std::string, Tensor<float>> extra;
    extra.emplace("image_size",
                  Tensor<float>(Shape{2}, std::vector<float>{float(image_h_),
                                                             float(image_w_)}));
    save_checkpoint(path,
                    pack_state(step, cfg_.echo(), model_->params(),
                               const_cast<nn::AdamW<float>*>(&opt_), extra));
  }

  i64 skipped_degenerate() const { return skipped_degenerate_; }

 private:
  std::string pick_clip(i64 step_idx) {
    const i64 n = static_cast<i64>(train_ids_.size());
    const i64 epoch = step_idx / n;
    if (epoch != shuffled_epoch_) {
      order_ = train_ids_;
      Rng r = root_rng_.child(0x0e0c).child(static_cast<u64>(epoch));
      for (i64 i = static_cast<i64>(order_.size()) - 1; i > 0; --i)
        std::swap(order_[i], order_[r.below(i + 1)]);
      shuffled_epoch_ = epoch;
    }
    return order_[step_idx % n];
  }

  RunConfig cfg_;
  vae::VaeConfig vcfg_;
  synth::DatasetReader reader_;
  ClipCache cache_;
  Rng root_rng_;
  std::vector<std::string> train_ids_, order_;
  i64 shuffled_epoch_ = -1;
  std::unique_ptr<vae::DualDecoderVae<float>> model_;
  nn::AdamW<float> opt_;
  i64 image_h_ = 0, image_w_ = 0;
  i64 target_views_ = 0;
  double depth_keep_ = 1.0;
  i64 skipped_degenerate_ = 0;
};

/// Rebuilds a trained VAE from a checkpoint (architecture from the echoed
/// config, image size from metadata).
struct LoadedVae {
  RunConfig cfg;
  vae::VaeConfig vcfg;
  std::unique_ptr<vae::DualDecoderVae<float>> model;
  i64 step = 0;
};

inline LoadedVae load_vae(const std::string& ckpt_path) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  LoadedVae out;
  out.cfg = RunConfig::from_string(ckpt.config_echo);
  out.vcfg = out.cfg.vae_config();
  auto it = ckpt.tensors.find("meta.image_size");
  GW_REQUIRE(it != ckpt.tensors.end(), "checkpoint missing image size meta");
  const i64 H = static_cast<i64>(it->second[0]);
  const i64 W = static_cast<i64>(it->second[1]);
  out.model = std::make_unique<vae::DualDecoderVae<float>>(out.cfg.seed(),
                                                           out.vcfg, H, W);
  unpack_state(ckpt, out.model->params());
  out.step = ckpt.step;
  return out;
}

}  // namespace gw::harness
