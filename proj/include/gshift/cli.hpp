// SPDX-License-Identifier: Apache-2.0
// Command-line front end. Exit codes: 0 success, 1 numeric or internal
// failure, 2 configuration or usage error, 3 data or format error.
#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gshift/config.hpp"
#include "gshift/metrics.hpp"
#include "gshift/net.hpp"
#include "gshift/probe.hpp"
#include "gshift/train.hpp"
#include "gshift/video.hpp"

namespace gshift::cli {

namespace fs = std::filesystem;

enum class DegradeKind { gaussian_noise, motion_blur };

inline const std::vector<std::pair<std::string_view, DegradeKind>>& degrade_kind_names() {
  static const std::vector<std::pair<std::string_view, DegradeKind>> names{
      {"gaussian_noise", DegradeKind::gaussian_noise}, {"motion_blur", DegradeKind::motion_blur}};
  return names;
}

inline const std::vector<std::pair<std::string_view, SynthStyle>>& synth_style_names() {
  static const std::vector<std::pair<std::string_view, SynthStyle>> names{
      {"moving_shapes", SynthStyle::moving_shapes}, {"drifting_texture", SynthStyle::drifting_texture}};
  return names;
}

/// `data.*` keys of a gen-data spec.
struct DataGenConfig {
  int count = 4;
  int frames = 8;
  int height = 64;
  int width = 64;
  SynthStyle style = SynthStyle::moving_shapes;
  DegradeKind kind = DegradeKind::gaussian_noise;
  double sigma_lo = 0.0;
  double sigma_hi = 50.0;
  int radius = 1;
  bool clip_range = false;
  bool export_ppm = false;

  void validate() const {
    if (count < 1) throw ConfigError("data.count", "must be at least 1");
    if (frames < 2) throw ConfigError("data.frames", "must be at least 2");
    if (height < 1 || width < 1) throw ConfigError(height < 1 ? "data.height" : "data.width", "must be positive");
    if (!(sigma_lo >= 0 && sigma_lo <= sigma_hi)) throw ConfigError("data.sigma_lo", "need 0 <= sigma_lo <= sigma_hi");
    if (radius < 1) throw ConfigError("data.radius", "must be at least 1");
  }
};

inline DataGenConfig data_config_from(const ConfigDoc& doc) {
  DataGenConfig c;
  c.count = doc.get_int("data.count", c.count);
  c.frames = doc.get_int("data.frames", c.frames);
  c.height = doc.get_int("data.height", c.height);
  c.width = doc.get_int("data.width", c.width);
  c.style = doc.get_enum("data.style", c.style, synth_style_names());
  c.kind = doc.get_enum("data.kind", c.kind, degrade_kind_names());
  c.sigma_lo = doc.get_double("data.sigma_lo", c.sigma_lo);
  c.sigma_hi = doc.get_double("data.sigma_hi", c.sigma_hi);
  c.radius = doc.get_int("data.radius", c.radius);
  c.clip_range = doc.get_bool("data.clip_range", c.clip_range);
  c.export_ppm = doc.get_bool("data.export_ppm", c.export_ppm);
  c.validate();
  return c;
}

inline std::string data_config_text(const DataGenConfig& c, std::uint64_t seed) {
  std::ostringstream o;
  o.precision(17);
  o << "data.clip_range = " << (c.clip_range ? "true" : "false") << '\n'
    << "data.count = " << c.count << '\n'
    << "data.export_ppm = " << (c.export_ppm ? "true" : "false") << '\n'
    << "data.frames = " << c.frames << '\n'
    << "data.height = " << c.height << '\n'
    << "data.kind = " << enum_name(c.kind, degrade_kind_names()) << '\n'
    << "data.radius = " << c.radius << '\n'
    << "data.seed = " << seed << '\n'
    << "data.sigma_hi = " << c.sigma_hi << '\n'
    << "data.sigma_lo = " << c.sigma_lo << '\n'
    << "data.style = " << enum_name(c.style, synth_style_names()) << '\n'
    << "data.width = " << c.width << '\n';
  return o.str();
}

/// Published per-frame GFLOPs of the named presets.
inline std::optional<double> reference_gflops(const ModelConfig& cfg) {
  for (const auto& [name, g] : {std::pair<const char*, double>{"small", 47.1}, {"base", 146.5}, {"plus", 151.3}})
    if (model_config_text(cfg) == model_config_text(ModelConfig::preset(name))) return g;
  return std::nullopt;
}

namespace detail {

inline fs::path default_out_dir() {
  if (const char* env = std::getenv("GSHIFT_OUT_DIR"); env && *env) return env;
  return "gshift_out";
}

inline ConfigDoc load_doc(const std::string& path, const std::vector<std::string>& overrides) {
  ConfigDoc doc = path.empty() ? ConfigDoc{} : ConfigDoc::parse(gshift::detail::read_file(path));
  for (const auto& o : overrides) doc.set_override(o);
  return doc;
}

inline void write_text(const fs::path& path, const std::string& text) { gshift::detail::write_file(path, text); }

inline std::string fixed(double v, int digits) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(digits) << v;
  return o.str();
}

}  // namespace detail

/// Runs one command; `args` excludes the program name.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Grouped spatial-temporal shift video restoration", "gshift"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  std::string config_path, spec_path, ckpt_path, in_path, out_path, ref_path, json_path, resume_path, wrt = "neighbor";
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  bool seed_given = false, merge = false, allow_mismatch = false;
  int probe_h = 48, probe_w = 48, flops_h = 720, flops_w = 1280, frames = 1, py = -1, px = -1, frame = 1, patch = 8;

  auto add_config = [&](CLI::App* c) {
    c->add_option("--config", config_path, "flat key = value config file");
    c->add_option("--set", overrides, "override, key=value (repeatable)");
  };

  auto* gen = app.add_subcommand("gen-data", "write synthetic degraded clips and a manifest");
  gen->add_option("--spec", spec_path, "data spec file (data.* keys)");
  gen->add_option("--set", overrides, "override, key=value (repeatable)");
  gen->add_option("--out", out_path, "output directory");
  gen->add_option("--seed", seed, "base seed")->capture_default_str();

  auto* train = app.add_subcommand("train", "train a model (model.* and train.* keys)");
  add_config(train);
  train->add_option("--out", out_path, "run directory");
  train->add_option("--seed", seed, "model seed (overrides train.seed)");
  train->add_option("--resume", resume_path, "checkpoint to resume from");
  train->add_flag("--allow-config-mismatch", allow_mismatch, "resume even if the config digest differs");

  auto* infer = app.add_subcommand("infer", "restore a VTEN clip");
  infer->add_option("--ckpt", ckpt_path, "checkpoint")->required();
  infer->add_option("--in", in_path, "degraded clip (VTEN)")->required();
  infer->add_option("--out", out_path, "restored clip (VTEN)")->required();
  infer->add_flag("--merge-reparam", merge, "fold branched kernels before inference");
  add_config(infer);
  infer->add_flag("--allow-config-mismatch", allow_mismatch, "ignore a config digest mismatch");

  auto* eval = app.add_subcommand("eval", "per-frame PSNR and SSIM of a clip against a reference");
  eval->add_option("--ref", ref_path, "reference clip (VTEN)")->required();
  eval->add_option("--out-clip", in_path, "restored clip (VTEN)")->required();
  eval->add_option("--json", json_path, "report path (default <out dir>/report.json)");
  eval->add_option("--ckpt", ckpt_path, "checkpoint whose config digest is recorded");

  auto* probe = app.add_subcommand("probe-rf", "gradient support of one GSTS block output pixel");
  add_config(probe);
  probe->add_option("--wrt", wrt, "neighbor or same")->check(CLI::IsMember({"neighbor", "same"}));
  probe->add_option("--height", probe_h, "probe height")->capture_default_str();
  probe->add_option("--width", probe_w, "probe width")->capture_default_str();
  probe->add_option("--y", py, "target row (default centre)");
  probe->add_option("--x", px, "target column (default centre)");
  probe->add_option("--seed", seed, "parameter and input seed");

  auto* attr = app.add_subcommand("attribute", "per-group attribution of a target patch");
  attr->add_option("--ckpt", ckpt_path, "checkpoint")->required();
  attr->add_option("--in", in_path, "clip (VTEN)")->required();
  attr->add_option("--frame", frame, "target frame")->capture_default_str();
  attr->add_option("--y", py, "patch top (default centred)");
  attr->add_option("--x", px, "patch left (default centred)");
  attr->add_option("--size", patch, "patch side")->capture_default_str();
  attr->add_option("--json", json_path, "report path");

  auto* flops = app.add_subcommand("count-flops", "parameters and per-frame FLOPs");
  add_config(flops);
  flops->add_option("--height", flops_h, "frame height")->capture_default_str();
  flops->add_option("--width", flops_w, "frame width")->capture_default_str();
  flops->add_option("--frames", frames, "clip length")->capture_default_str();

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }
  seed_given = train->count("--seed") > 0 || probe->count("--seed") > 0;

  try {
    if (gen->parsed()) {
      ConfigDoc doc = detail::load_doc(spec_path, overrides);
      const DataGenConfig dc = data_config_from(doc);
      doc.finish({"data"});
      const fs::path dir = out_path.empty() ? detail::default_out_dir() : fs::path(out_path);
      fs::create_directories(dir);
      detail::write_text(dir / "resolved.cfg", data_config_text(dc, seed));
      std::string manifest;
      for (int i = 0; i < dc.count; ++i) {
        const std::uint64_t clip_seed = CounterRng::derive(seed, static_cast<std::uint64_t>(i));
        char stem[32];
        std::snprintf(stem, sizeof stem, "clip_%04d", i);
        VideoClip clean, degraded;
        double param;
        if (dc.kind == DegradeKind::gaussian_noise) {
          clean = gen_synthetic_video(clip_seed, dc.frames, dc.height, dc.width, dc.style);
          auto [noisy, sigma] = add_gaussian_noise(clean, dc.sigma_lo, dc.sigma_hi, clip_seed, dc.clip_range);
          degraded = std::move(noisy);
          param = sigma;
        } else {
          const VideoClip sharp =
              gen_synthetic_video(clip_seed, dc.frames + 2 * dc.radius, dc.height, dc.width, dc.style);
          auto [blurred, centers] = synth_motion_blur(sharp, dc.radius);
          degraded = std::move(blurred);
          clean = std::move(centers);
          param = dc.radius;
        }
        const std::string deg_name = std::string(stem) + ".degraded.vten", clean_name = std::string(stem) + ".clean.vten";
        save_vten(degraded, dir / deg_name);
        save_vten(clean, dir / clean_name);
        if (dc.export_ppm) {
          export_ppm(degraded, 0, dir / (std::string(stem) + ".degraded.ppm"));
          export_ppm(clean, 0, dir / (std::string(stem) + ".clean.ppm"));
        }
        std::ostringstream line;
        line.precision(10);
        line << deg_name << '\t' << clip_seed << '\t' << enum_name(dc.kind, degrade_kind_names()) << '\t' << param
             << '\t' << clean_name << '\n';
        manifest += line.str();
      }
      detail::write_text(dir / "manifest.tsv", manifest);
      out << "wrote " << dc.count << " clips to " << dir.string() << '\n';
      return 0;
    }

    if (train->parsed()) {
      ConfigDoc doc = detail::load_doc(config_path, overrides);
      if (seed_given) doc.set("train.seed", std::to_string(seed));
      const ModelConfig mc = model_config_from(doc);
      const TrainConfig tc = train_config_from(doc);
      doc.finish({"model", "train"});
      const fs::path dir = out_path.empty() ? detail::default_out_dir() : fs::path(out_path);
      fs::create_directories(dir);
      detail::write_text(dir / "resolved.cfg", model_config_text(mc) + train_config_text(tc));
      std::optional<Checkpoint> resume;
      if (!resume_path.empty()) resume = load_checkpoint(resume_path, &mc, allow_mismatch);
      ShiftNet<float> model(mc, tc.seed);
      TrainOptions opt;
      opt.out_dir = dir;
      opt.log = &out;
      opt.resume = resume ? &*resume : nullptr;
      const TrainResult r = train_loop(model, tc, opt);
      nlohmann::json summary{{"steps", r.last_step},
                             {"initial_loss", r.initial_loss},
                             {"final_loss", r.final_loss},
                             {"val_psnr", r.val_psnr},
                             {"input_psnr", r.input_psnr},
                             {"config_digest", std::to_string(config_digest(mc))},
                             {"param_count", model.param_count()}};
      detail::write_text(dir / "summary.json", summary.dump(2) + "\n");
      return 0;
    }

    if (infer->parsed()) {
      std::optional<ModelConfig> expected;
      if (!config_path.empty() || !overrides.empty()) {
        ConfigDoc doc = detail::load_doc(config_path, overrides);
        expected = model_config_from(doc);
        doc.finish({"model", "train"});
      }
      const Checkpoint ck = load_checkpoint(ckpt_path, expected ? &*expected : nullptr, allow_mismatch);
      ShiftNet<float> model = model_from_checkpoint(ck);
      if (merge) model.merge_reparam();
      const VideoClip clip = load_vten(in_path);
      if (clip.channels != ck.config.in_channels)
        gshift::detail::fail("clip has ", clip.channels, " channels, model expects ", ck.config.in_channels);
      VideoClip restored = to_clips(model.infer(to_tensor<float>(clip), clip.frames), clip.frames).front();
      restored.motion = clip.motion;
      save_vten(restored, out_path);
      out << "restored " << clip.frames << " frames to " << out_path << '\n';
      return 0;
    }

    if (eval->parsed()) {
      const VideoClip ref = load_vten(ref_path), got = load_vten(in_path);
      if (!ref.same_geometry(got)) gshift::detail::fail("reference and restored clips differ in geometry");
      std::uint64_t digest = 0;
      if (!ckpt_path.empty()) digest = load_checkpoint(ckpt_path).digest;
      const MetricReport rep = evaluate(got, ref, digest);
      out << rep.to_tsv();
      const fs::path jp = json_path.empty() ? detail::default_out_dir() / "report.json" : fs::path(json_path);
      nlohmann::json j{{"psnr", rep.psnr},
                       {"ssim", rep.ssim},
                       {"mean_psnr", rep.mean_psnr},
                       {"mean_ssim", rep.mean_ssim},
                       {"temporal_consistency", rep.temporal_consistency},
                       {"config_digest", std::to_string(rep.config_digest)}};
      detail::write_text(jp, j.dump(2) + "\n");
      return 0;
    }

    if (probe->parsed()) {
      ConfigDoc doc = detail::load_doc(config_path, overrides);
      const ModelConfig mc = model_config_from(doc);
      doc.finish({"model", "train"});
      RfProbeOptions p;
      p.height = probe_h;
      p.width = probe_w;
      p.y = py;
      p.x = px;
      p.seed = seed;
      p.wrt = wrt == "same" ? ProbeInput::same_frame : ProbeInput::neighbor_frame;
      const SupportBox b = receptive_field_probe(mc.gsts, mc.fusion_width, p);
      out << "y0\ty1\tx0\tx1\theight\twidth\n"
          << b.y0 << '\t' << b.y1 << '\t' << b.x0 << '\t' << b.x1 << '\t' << b.height() << '\t' << b.width() << '\n';
      return 0;
    }

    if (attr->parsed()) {
      const Checkpoint ck = load_checkpoint(ckpt_path);
      const ShiftNet<float> model = model_from_checkpoint(ck);
      const VideoClip clip = load_vten(in_path);
      Patch pt{frame, py < 0 ? (clip.height - patch) / 2 : py, px < 0 ? (clip.width - patch) / 2 : px, patch, patch};
      const GroupAttribution a = shift_group_attribution(model, clip, pt);
      out << "group\tdx\tdy\tweight\n";
      nlohmann::json groups = nlohmann::json::array();
      for (std::size_t g = 0; g < a.weights.size(); ++g) {
        out << g << '\t' << a.offsets[g].dx << '\t' << a.offsets[g].dy << '\t' << detail::fixed(a.weights[g], 6) << '\n';
        groups.push_back({{"dx", a.offsets[g].dx}, {"dy", a.offsets[g].dy}, {"weight", a.weights[g]}});
      }
      out << "top\t" << a.top() << "\tdirection\t" << (a.direction == Direction::forward ? "forward" : "backward") << '\n';
      if (!json_path.empty()) {
        nlohmann::json j{{"groups", groups},
                         {"top", a.top()},
                         {"cross_frame", a.cross_frame},
                         {"direction", a.direction == Direction::forward ? "forward" : "backward"}};
        detail::write_text(json_path, j.dump(2) + "\n");
      }
      return 0;
    }

    if (flops->parsed()) {
      ConfigDoc doc = detail::load_doc(config_path, overrides);
      const ModelConfig mc = model_config_from(doc);
      doc.finish({"model", "train"});
      if (flops_h % 4 != 0 || flops_w % 4 != 0) throw ConfigError("--height/--width", "must be multiples of 4");
      if (frames < 1) throw ConfigError("--frames", "must be at least 1");
      const ShiftNet<float> model(mc, 0);
      const long long f = model.flops_per_frame(flops_h, flops_w);
      out << "params\t" << model.param_count() << '\n'
          << "gflops_per_frame\t" << detail::fixed(f / 1e9, 3) << '\n'
          << "gflops_total\t" << detail::fixed(f * static_cast<double>(frames) / 1e9, 3) << '\n';
      // The published figures do not state their input size or MAC convention.
      if (const auto ref = reference_gflops(mc)) out << "published_gflops_per_frame\t" << detail::fixed(*ref, 1) << '\n';
      return 0;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
    return 3;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return 1;
  } catch (const InvalidArgument& e) {
    err << "invalid input: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace gshift::cli
