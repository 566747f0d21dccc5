// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <map>
#include <sstream>

#include "gaussworld/flow/model.hpp"
#include "gaussworld/synth/scene.hpp"
#include "gaussworld/vae/config.hpp"

namespace gw::harness {

/// Run configuration: a whitespace-separated "key value" file with '#'
/// comments. The raw text is echoed verbatim into every checkpoint and
/// report. Unknown keys are kept (forward compatibility); typed getters
/// supply module defaults.
class RunConfig {
 public:
  RunConfig() = default;

  static RunConfig from_string(const std::string& text) {
    RunConfig cfg;
    cfg.echo_ = text;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      std::istringstream ls(line);
      std::string key;
      if (!(ls >> key)) continue;
      std::string value;
      std::getline(ls, value);
      const auto b = value.find_first_not_of(" \t");
      const auto e = value.find_last_not_of(" \t\r");
      value = b == std::string::npos ? "" : value.substr(b, e - b + 1);
      cfg.kv_[key] = value;
    }
    return cfg;
  }

  static RunConfig from_file(const std::string& path) {
    std::ifstream is(path);
    GW_REQUIRE(is.good(), "cannot read config file " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return from_string(ss.str());
  }

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string get(const std::string& key, const std::string& dflt) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? dflt : it->second;
  }

  i64 get_i(const std::string& key, i64 dflt) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? dflt : static_cast<i64>(std::stoll(it->second));
  }

  double get_f(const std::string& key, double dflt) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? dflt : std::stod(it->second);
  }

  bool get_b(const std::string& key, bool dflt) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    return it->second == "1" || it->second == "true" || it->second == "yes";
  }

  void set(const std::string& key, const std::string& value) {
    kv_[key] = value;
    echo_ += key + " " + value + "\n";
  }

  const std::string& echo() const { return echo_; }

  // --- typed views -------------------------------------------------------

  u64 seed() const { return static_cast<u64>(get_i("seed", 1)); }
  std::string dataset() const { return get(std::string("dataset"), ""); }
  std::string out_dir() const { return get(std::string("out"), "runs/out"); }
  i64 max_steps() const { return get_i("max_steps", 200); }
  i64 batch_size() const { return get_i("batch_size", 1); }
  i64 checkpoint_every() const { return get_i("checkpoint_every", 0); }
  i64 log_every() const { return get_i("log_every", 25); }
  double lr() const { return get_f("lr", 6e-5); }
  double lr_min() const { return get_f("lr_min", 1e-7); }
  double weight_decay() const { return get_f("weight_decay", 1e-4); }
  double beta1() const { return get_f("beta1", 0.9); }
  double beta2() const { return get_f("beta2", 0.999); }

  void validate() const {
    GW_REQUIRE(lr() > lr_min() && lr_min() > 0,
               "learning rate must exceed the minimum rate (both > 0)");
  }

  vae::VaeConfig vae_config() const {
    vae::VaeConfig v;
    v.latent_channels = get_i("vae.latent_channels", v.latent_channels);
    v.downsample = get_i("vae.downsample", v.downsample);
    v.base_channels = get_i("vae.base_channels", v.base_channels);
    v.norm_groups = get_i("vae.norm_groups", v.norm_groups);
    v.gs_layers = get_i("vae.gs_layers", v.gs_layers);
    v.gs_width = get_i("vae.gs_width", v.gs_width);
    v.gs_heads = get_i("vae.gs_heads", v.gs_heads);
    v.patch = get_i("vae.patch", v.patch);
    v.max_views = get_i("vae.max_views", v.max_views);
    v.near = get_f("vae.near", v.near);
    v.far = get_f("vae.far", v.far);
    v.w_perc = get_f("vae.w_perc", v.w_perc);
    v.w_kl = get_f("vae.w_kl", v.w_kl);
    v.w_depth = get_f("vae.w_depth", v.w_depth);
    v.lambda_storm = get_f("vae.lambda", v.lambda_storm);
    v.opacity_bias_init = get_f("vae.opacity_bias", v.opacity_bias_init);
    v.depth_bias_init = get_f("vae.depth_bias", v.depth_bias_init);
    v.logvar_bias_init = get_f("vae.logvar_bias", v.logvar_bias_init);
    v.isotropic_scale = get_b("vae.isotropic_scale", v.isotropic_scale);
    if (has("vae.scale_bias")) v.scale_bias_init = get_f("vae.scale_bias", 0.0);
    v.raster.footprint_alpha = get_f("vae.footprint_alpha", 1e-4);
    v.validate();
    return v;
  }

  flow::FlowConfig flow_config() const {
    flow::FlowConfig f;
    f.units = get_i("flow.units", f.units);
    f.width = get_i("flow.width", f.width);
    f.patch = get_i("flow.patch", f.patch);
    f.heads = get_i("flow.heads", f.heads);
    f.latent_channels = get_i("vae.latent_channels", f.latent_channels);
    f.text_vocab = get_i("flow.text_vocab", f.text_vocab);
    f.text_width = get_i("flow.text_width", f.text_width);
    f.max_frames = get_i("flow.max_frames", f.max_frames);
    f.p_drop_temporal = get_f("flow.p_drop_temporal", f.p_drop_temporal);
    f.p_drop_crossview = get_f("flow.p_drop_crossview", f.p_drop_crossview);
    f.allow_joint_drop = get_b("flow.allow_joint_drop", f.allow_joint_drop);
    f.p_cond_drop = get_f("flow.p_cond_drop", f.p_cond_drop);
    f.validate();
    return f;
  }

  synth::SceneComplexity scene_complexity() const {
    synth::SceneComplexity cx;
    cx.min_primitives = get_i("synth.min_primitives", cx.min_primitives);
    cx.max_primitives = get_i("synth.max_primitives", cx.max_primitives);
    cx.max_speed = get_f("synth.max_speed", cx.max_speed);
    cx.moving_fraction = get_f("synth.moving_fraction", cx.moving_fraction);
    cx.ego_speed_max = get_f("synth.ego_speed_max", cx.ego_speed_max);
    return cx;
  }

 private:
  std::map<std::string, std::string> kv_;
  std::string echo_;
};

}  // namespace gw::harness
