// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>
#include <iostream>

#include "gaussworld/gaussworld.hpp"

using namespace gw;

namespace {

int cmd_synth(u64 seed, i64 clips, i64 views, i64 frames, i64 res,
              const std::string& out, double fov, double val_frac,
              bool multires, const std::string& config_path) {
  harness::RunConfig cfg;
  if (!config_path.empty()) cfg = harness::RunConfig::from_file(config_path);
  synth::SceneComplexity cx = cfg.scene_complexity();
  if (!multires) {
    synth::generate_dataset(out, seed, clips, views, frames, res, res, cx,
                            val_frac, fov);
  } else {
    // Three sizes with the configured sampling ratios (0.1 / 0.3 / 0.6).
    namespace fs = std::filesystem;
    fs::create_directories(out);
    const i64 sizes[3] = {res / 2, (res * 3) / 4, res};
    Rng rng(seed);
    std::vector<synth::ManifestEntry> entries;
    const i64 n_val = std::max<i64>(1, i64(std::ceil(val_frac * double(clips))));
    for (i64 i = 0; i < clips; ++i) {
      const double u = rng.uniform();
      const i64 size = sizes[u < 0.1 ? 0 : (u < 0.4 ? 1 : 2)];
      synth::SceneComplexity ci = cx;
      ci.frames = frames;
      const auto rig = synth::make_camera_rig(views, fov, size, size);
      auto scene = synth::sample_scene(rng.child(i).next_u64(), ci);
      auto clip = synth::render_clip(scene, rig, synth::default_timestamps(frames));
      clip.id = synth::clip_id_for_index(i);
      synth::write_clip(out + "/" + clip.id, clip);
      entries.push_back({clip.id, i >= clips - n_val ? "val" : "train"});
    }
    std::sort(entries.begin(), entries.end(),
              [](const synth::ManifestEntry& a, const synth::ManifestEntry& b) {
                return a.id < b.id;
              });
    synth::write_manifest(out, entries);
  }
  std::cout << "wrote " << clips << " clips to " << out << "\n";
  return 0;
}

int cmd_render_debug(const std::string& out, u64 seed) {
  namespace fs = std::filesystem;
  fs::create_directories(out);
  Rng rng(seed);
  const auto rig = synth::make_camera_rig(1, 80.0, 128, 128, 0.0);
  splat::GaussianSet<float> g = splat::GaussianSet<float>::empty();
  const i64 n = 48;
  g.positions = Tensor<float>(Shape{n, 3});
  g.rotations = Tensor<float>(Shape{n, 4});
  g.scales = Tensor<float>(Shape{n, 3});
  g.opacities = Tensor<float>(Shape{n});
  g.colors = Tensor<float>(Shape{n, 3});
  g.velocities = Tensor<float>(Shape{n, 3});
  g.source_times = Tensor<float>(Shape{n});
  for (i64 i = 0; i < n; ++i) {
    g.positions[i * 3 + 0] = float(rng.uniform(3, 12));
    g.positions[i * 3 + 1] = float(rng.uniform(-4, 4));
    g.positions[i * 3 + 2] = float(rng.uniform(-3, 3));
    Quat q = Quat::from_axis_angle({rng.uniform(-1, 1), rng.uniform(-1, 1), 1.0},
                                   rng.uniform(0, 3));
    g.rotations[i * 4] = float(q.w);
    g.rotations[i * 4 + 1] = float(q.x);
    g.rotations[i * 4 + 2] = float(q.y);
    g.rotations[i * 4 + 3] = float(q.z);
    for (int k = 0; k < 3; ++k) {
      g.scales[i * 3 + k] = float(rng.uniform(0.2, 0.9));
      g.colors[i * 3 + k] = float(rng.uniform(0.1, 0.95));
    }
    g.opacities[i] = float(rng.uniform(0.3, 0.95));
  }
  auto outp = splat::rasterize(g, rig[0]);
  const float sky[3] = {0.45f, 0.62f, 0.9f};
  auto rgb = splat::composite_sky(outp, sky);
  write_ppm(out + "/rgb.ppm", rgb.reshaped({128, 128, 3}));
  write_pgm16(out + "/depth.pgm", outp.depth, 0.001);
  Tensor<float> alpha_img(Shape{128, 128, 3});
  for (i64 p = 0; p < 128 * 128; ++p)
    for (int c = 0; c < 3; ++c) alpha_img[p * 3 + c] = outp.alpha[p];
  write_ppm(out + "/alpha.ppm", alpha_img);
  std::cout << "wrote rgb/depth/alpha debug renders to " << out << "\n";
  return 0;
}

std::vector<synth::MultiViewClip> load_split(const std::string& dataset,
                                             const std::string& split) {
  synth::DatasetReader reader(dataset);
  std::vector<synth::MultiViewClip> clips;
  for (const auto& id : reader.ids(split)) clips.push_back(reader.open(id));
  return clips;
}

int cmd_eval(const std::string& metrics, const std::string& ckpt,
             const std::string& dataset, const std::string& gen_dir,
             const std::string& out_path) {
  auto vload = harness::load_vae(ckpt);
  auto val = load_split(dataset, "val");
  GW_REQUIRE(!val.empty(), "dataset has no val clips");
  harness::MetricsReport report;
  const bool want_depth = metrics.find("absrel") != std::string::npos ||
                          metrics.find("delta1") != std::string::npos ||
                          metrics.find("drmse") != std::string::npos;
  if (metrics.find("psnr") != std::string::npos || want_depth) {
    auto res = harness::evaluate_vae(*vload.model, val);
    report = res.report;
  }
  if (metrics.find("frechet") != std::string::npos) {
    GW_REQUIRE(!gen_dir.empty(), "frechet needs --gen with generated clips");
    auto gen = load_split(gen_dir, "");
    report.scalars["frechet_image"] = harness::metric_frechet_latent(
        *vload.model, val, gen, harness::FrechetMode::image, &std::cerr);
    report.scalars["frechet_video"] = harness::metric_frechet_latent(
        *vload.model, val, gen, harness::FrechetMode::video, &std::cerr);
  }
  report.checkpoint_id = ckpt;
  report.split = "val";
  std::cout << report.to_text();
  if (!out_path.empty()) report.write(out_path);
  return 0;
}

int cmd_ablate(const std::string& name, const std::string& config_path) {
  auto cfg = harness::RunConfig::from_file(config_path);
  const std::string out = cfg.out_dir();
  std::filesystem::create_directories(out);
  auto val = load_split(cfg.dataset(), "val");
  const i64 sample_steps = cfg.get_i("sample_steps", 50);

  if (name == "ref_frames") {
    auto vload = harness::load_vae(cfg.get("vae_checkpoint", ""));
    auto fload = harness::load_flow(cfg.get("flow_checkpoint", ""));
    auto mload = harness::load_vae(
        cfg.get("metric_checkpoint", cfg.get("vae_checkpoint", "")));
    auto res = harness::ablate_ref_frames(*vload.model, fload, val,
                                          *mload.model, sample_steps,
                                          cfg.seed(), &std::cerr);
    std::cout << res.table;
    std::ofstream(out + "/ref_frames_table.txt") << res.table;
    return 0;
  }
  if (name == "storm_vae") {
    // Two full arms trained from scratch at equal step counts.
    auto train_arm = [&](double lambda, const std::string& tag) {
      harness::RunConfig vcfg = cfg;
      vcfg.set("vae.lambda", std::to_string(lambda));
      vcfg.set("out", out + "/vae_" + tag);
      vcfg.set("max_steps", cfg.get("vae_steps", "300"));
      harness::VaeTraining vt(vcfg);
      vt.run(std::cerr);
      const std::string vpath = out + "/vae_" + tag + "/vae_final.gwck";
      harness::RunConfig dcfg = cfg;
      dcfg.set("out", out + "/flow_" + tag);
      dcfg.set("max_steps", cfg.get("flow_steps", "300"));
      harness::DiffusionTraining dt(dcfg, vpath);
      dt.run(std::cerr);
      return std::make_pair(vpath, out + "/flow_" + tag + "/flow_final.gwck");
    };
    auto [vp_plain, fp_plain] = train_arm(0.0, "plain");
    auto [vp_recon, fp_recon] = train_arm(cfg.get_f("vae.lambda", 0.5), "recon");
    std::string metric_ckpt = cfg.get("metric_checkpoint", "");
    if (metric_ckpt.empty()) metric_ckpt = vp_recon;
    auto va = harness::load_vae(vp_plain);
    auto vb = harness::load_vae(vp_recon);
    auto fa = harness::load_flow(fp_plain);
    auto fb = harness::load_flow(fp_recon);
    auto vm = harness::load_vae(metric_ckpt);
    auto res = harness::ablate_vae_arms(*va.model, fa, *vb.model, fb, val,
                                        *vm.model, sample_steps, cfg.seed(), 0,
                                        &std::cerr);
    std::cout << res.table;
    std::ofstream(out + "/storm_vae_table.txt") << res.table;
    return 0;
  }
  fail("unknown ablation name: " + name + " (want ref_frames or storm_vae)");
}

}  // namespace

int main(int argc, char** argv) {
  init_threading();
  CLI::App app{"gaussworld: multi-view world model with a splatting-shaped latent space"};
  app.require_subcommand(1);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
  u64 seed = 1;
  i64 clips = 8, views = 6, frames = 19, res = 64;
  double fov = 72.0, val_frac = 0.2;
  std::string out_dir = "data/out", config_path;
  bool multires = false;
  synth_cmd->add_option("--seed", seed);
  synth_cmd->add_option("--clips", clips);
  synth_cmd->add_option("--views", views);
  synth_cmd->add_option("--frames", frames);
  synth_cmd->add_option("--res", res);
  synth_cmd->add_option("--fov", fov);
  synth_cmd->add_option("--val-frac", val_frac);
  synth_cmd->add_option("--out", out_dir)->required();
  synth_cmd->add_option("--config", config_path);
  synth_cmd->add_flag("--multires", multires,
                      "sample 3 sizes with ratios 0.1/0.3/0.6");

  // train-vae / train-diffusion
  auto* tv_cmd = app.add_subcommand("train-vae", "stage 1: dual-decoder VAE");
  std::string tv_config;
  tv_cmd->add_option("--config", tv_config)->required();

  auto* td_cmd = app.add_subcommand("train-diffusion",
                                    "stage 2: rectified-flow transformer");
  std::string td_config, td_vae;
  td_cmd->add_option("--config", td_config)->required();
  td_cmd->add_option("--vae", td_vae)->required();

  // generate
  auto* gen_cmd = app.add_subcommand("generate", "sample videos");
  std::string gen_vae, gen_flow, gen_data, gen_clip, gen_out = "runs/generate";
  i64 gen_refs = 3, gen_steps = 50, gen_horizon = -1;
  u64 gen_seed = 1;
  double gen_guidance = 1.0;
  gen_cmd->add_option("--vae", gen_vae)->required();
  gen_cmd->add_option("--checkpoint", gen_flow)->required();
  gen_cmd->add_option("--data", gen_data)->required();
  gen_cmd->add_option("--clip", gen_clip);
  gen_cmd->add_option("--refs", gen_refs)->check(CLI::IsMember({0, 1, 3}));
  gen_cmd->add_option("--steps", gen_steps);
  gen_cmd->add_option("--horizon", gen_horizon);
  gen_cmd->add_option("--seed", gen_seed);
  gen_cmd->add_option("--guidance", gen_guidance);
  gen_cmd->add_option("--out", gen_out);

  // reconstruct
  auto* rec_cmd = app.add_subcommand("reconstruct", "sliding-window 4D recon");
  std::string rec_vae, rec_data, rec_clip, rec_out = "runs/reconstruct",
              rec_latents;
  i64 rec_window = 4;
  rec_cmd->add_option("--checkpoint", rec_vae)->required();
  rec_cmd->add_option("--data", rec_data)->required();
  rec_cmd->add_option("--clip", rec_clip);
  rec_cmd->add_option("--window", rec_window);
  rec_cmd->add_option("--latents", rec_latents,
                      "optional latent grid tensor file ([T,V,C,h,w])");
  rec_cmd->add_option("--out", rec_out);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "metrics suite");
  std::string ev_metrics = "psnr,drmse,absrel,delta1", ev_ckpt, ev_data,
              ev_gen, ev_out;
  eval_cmd->add_option("--metrics", ev_metrics);
  eval_cmd->add_option("--checkpoint", ev_ckpt)->required();
  eval_cmd->add_option("--data", ev_data)->required();
  eval_cmd->add_option("--gen", ev_gen);
  eval_cmd->add_option("--out", ev_out);

  // ablate
  auto* ab_cmd = app.add_subcommand("ablate", "directional ablations");
  std::string ab_name, ab_config;
  ab_cmd->add_option("--name", ab_name)
      ->required()
      ->check(CLI::IsMember({"ref_frames", "storm_vae"}));
  ab_cmd->add_option("--config", ab_config)->required();

  // render-debug
  auto* rd_cmd = app.add_subcommand("render-debug", "dump rgb/depth/alpha");
  std::string rd_out = "runs/render_debug";
  u64 rd_seed = 7;
  rd_cmd->add_option("--out", rd_out);
  rd_cmd->add_option("--seed", rd_seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth_cmd->parsed())
      return cmd_synth(seed, clips, views, frames, res, out_dir, fov, val_frac,
                       multires, config_path);
    if (tv_cmd->parsed()) {
      auto cfg = harness::RunConfig::from_file(tv_config);
      harness::VaeTraining t(cfg);
      t.run(std::cout);
      std::cout << "final checkpoint: " << cfg.out_dir() << "/vae_final.gwck\n";
      return 0;
    }
    if (td_cmd->parsed()) {
      auto cfg = harness::RunConfig::from_file(td_config);
      harness::DiffusionTraining t(cfg, td_vae);
      t.run(std::cout);
      std::cout << "final checkpoint: " << cfg.out_dir() << "/flow_final.gwck\n";
      return 0;
    }
    if (gen_cmd->parsed()) {
      auto vload = harness::load_vae(gen_vae);
      auto fload = harness::load_flow(gen_flow);
      synth::DatasetReader reader(gen_data);
      const std::string id = gen_clip.empty() ? reader.ids("val").at(0) : gen_clip;
      auto clip = reader.open(id);
      auto res = harness::generate_for_clip(*vload.model, fload, clip, gen_refs,
                                            gen_steps, gen_seed, gen_horizon,
                                            gen_guidance);
      harness::write_video_files(res.video, gen_out);
      write_tensor_file(gen_out + "/latents.gwt", res.latents);
      synth::write_clip(gen_out + "/clip_gen", res.video);
      synth::write_manifest(gen_out, {{"clip_gen", "val"}});
      std::cout << "generated " << res.video.frames() << " frames to "
                << gen_out << "\n";
      return 0;
    }
    if (rec_cmd->parsed()) {
      GW_REQUIRE(rec_window == 4, "only 4-frame windows are supported");
      auto vload = harness::load_vae(rec_vae);
      synth::DatasetReader reader(rec_data);
      const std::string id = rec_clip.empty() ? reader.ids("val").at(0) : rec_clip;
      auto clip = reader.open(id);
      Tensor<float> z;
      if (rec_latents.empty()) {
        z = harness::encode_clip_means(*vload.model, clip);
      } else {
        z = read_tensor_file<float>(rec_latents);
      }
      auto res = harness::reconstruct4d(*vload.model, z, clip.cameras,
                                        clip.timestamps, clip.view_valid,
                                        rec_out);
      std::cout << "reconstructed " << res.window_starts.size()
                << " windows to " << rec_out << "\n";
      return 0;
    }
    if (eval_cmd->parsed())
      return cmd_eval(ev_metrics, ev_ckpt, ev_data, ev_gen, ev_out);
    if (ab_cmd->parsed()) return cmd_ablate(ab_name, ab_config);
    if (rd_cmd->parsed()) return cmd_render_debug(rd_out, rd_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
