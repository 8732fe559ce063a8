// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gshift/config.hpp"
#include "gshift/metrics.hpp"
#include "gshift/net.hpp"
#include "gshift/video.hpp"

namespace gshift {

/// Mean absolute error over every element; for equal-sized frames this is
/// the frame average of per-frame means.
template <typename T>
Var<T> l1_loss(const Var<T>& output, const Var<T>& target) {
  detail::require_same_shape(output, target, "l1_loss");
  const std::size_t n = output.value().size();
  if (n == 0) detail::fail("l1_loss of empty tensors");
  const T* o = output.value().ptr();
  const T* t = target.value().ptr();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::abs(static_cast<double>(o[i]) - static_cast<double>(t[i]));
  const T value = static_cast<T>(acc / static_cast<double>(n));
  return output.tape()->record(Tensor<T>({1}, value), {output, target}, [n](BackwardContext<T>& ctx) {
    const T g = ctx.grad_out[0] / static_cast<T>(n);
    const T* o = ctx.in[0]->ptr();
    const T* t = ctx.in[1]->ptr();
    for (std::size_t i = 0; i < n; ++i) {
      const T s = o[i] > t[i] ? g : o[i] < t[i] ? -g : T(0);
      if (ctx.grad_in[0]) (*ctx.grad_in[0])[i] += s;
      if (ctx.grad_in[1]) (*ctx.grad_in[1])[i] -= s;
    }
  });
}

inline double l1_loss(const VideoClip& output, const VideoClip& target) {
  if (!output.same_geometry(target)) detail::fail("l1_loss: clips differ in geometry");
  double total = 0.0;
  for (int t = 0; t < output.frames; ++t) {
    auto a = output.frame(t), b = target.frame(t);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
    total += s / static_cast<double>(a.size());
  }
  return total / output.frames;
}

/// lr_min + (lr_max - lr_min) (1 + cos(pi step / total)) / 2.
inline double cosine_lr(long long step, long long total_steps, double lr_max, double lr_min) {
  if (total_steps <= 0) detail::fail("cosine_lr: total_steps must be positive");
  const double p = static_cast<double>(std::clamp(step, 0LL, total_steps)) / static_cast<double>(total_steps);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * p));
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment buffers keyed by parameter name.
template <typename T>
struct OptimState {
  long long step = 0;
  std::map<std::string, std::pair<Tensor<T>, Tensor<T>>> moments;

  friend bool operator==(const OptimState&, const OptimState&) = default;
};

/// One bias-corrected Adam update of every trainable parameter. Missing
/// gradients count as zero.
template <typename T>
void adam_step(ParamStore<T>& store, OptimState<T>& state, double lr, const AdamConfig& cfg = {}) {
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (Parameter<T>* p : store.all()) {
    if (!p->trainable) continue;
    auto [it, fresh] = state.moments.try_emplace(p->name, Tensor<T>(p->value.shape()), Tensor<T>(p->value.shape()));
    auto& [m, v] = it->second;
    if (m.shape() != p->value.shape()) detail::fail("adam_step: moment shape mismatch for ", p->name);
    const bool has_grad = p->grad.shape() == p->value.shape();
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = has_grad ? static_cast<double>(p->grad[i]) : 0.0;
      m[i] = static_cast<T>(cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g);
      v[i] = static_cast<T>(cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g);
      const double mhat = m[i] / c1, vhat = v[i] / c2;
      p->value[i] = static_cast<T>(p->value[i] - lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

enum class DataStyle { mixed, moving_shapes, drifting_texture };

struct TrainConfig {
  long long steps = 2000;
  int batch = 4;  // clips per step
  int frames = 2;
  int patch = 32;
  double sigma_lo = 0.0;  // 0-255 scale, sampled per clip
  double sigma_hi = 50.0;
  double val_sigma = 25.0;
  int val_clips = 8;
  int val_frames = 2;
  int val_size = 32;
  long long val_every = 250;
  double lr_max = 4e-4;
  double lr_min = 1e-7;
  AdamConfig adam;
  bool flips = true;
  DataStyle style = DataStyle::mixed;
  std::uint64_t seed = 0;       // model initialisation
  std::uint64_t data_seed = 1;  // training and validation clips
  long long checkpoint_every = 0;  // 0: final checkpoint only

  void validate() const {
    if (steps < 1) throw ConfigError("train.steps", "must be positive");
    if (batch < 1) throw ConfigError("train.batch", "must be at least 1");
    if (frames < 1) throw ConfigError("train.frames", "must be at least 1");
    if (patch < 4 || patch % 4 != 0) throw ConfigError("train.patch", "must be a positive multiple of 4");
    if (val_size < 4 || val_size % 4 != 0) throw ConfigError("train.val_size", "must be a positive multiple of 4");
    if (!(sigma_lo >= 0 && sigma_lo <= sigma_hi)) throw ConfigError("train.sigma_lo", "need 0 <= sigma_lo <= sigma_hi");
    if (!(lr_min < lr_max)) throw ConfigError("train.lr_min", "must be below train.lr_max");
    if (val_clips < 0) throw ConfigError("train.val_clips", "must be non-negative");
    if (val_frames < 1) throw ConfigError("train.val_frames", "must be at least 1");
  }
};

inline const std::vector<std::pair<std::string_view, DataStyle>>& data_style_names() {
  static const std::vector<std::pair<std::string_view, DataStyle>> names{
      {"mixed", DataStyle::mixed}, {"moving_shapes", DataStyle::moving_shapes}, {"drifting_texture", DataStyle::drifting_texture}};
  return names;
}

inline TrainConfig train_config_from(const ConfigDoc& doc) {
  TrainConfig c;
  c.steps = doc.get_integer("train.steps", c.steps);
  c.batch = doc.get_int("train.batch", c.batch);
  c.frames = doc.get_int("train.frames", c.frames);
  c.patch = doc.get_int("train.patch", c.patch);
  c.sigma_lo = doc.get_double("train.sigma_lo", c.sigma_lo);
  c.sigma_hi = doc.get_double("train.sigma_hi", c.sigma_hi);
  c.val_sigma = doc.get_double("train.val_sigma", c.val_sigma);
  c.val_clips = doc.get_int("train.val_clips", c.val_clips);
  c.val_frames = doc.get_int("train.val_frames", c.val_frames);
  c.val_size = doc.get_int("train.val_size", c.val_size);
  c.val_every = doc.get_integer("train.val_every", c.val_every);
  c.lr_max = doc.get_double("train.lr_max", c.lr_max);
  c.lr_min = doc.get_double("train.lr_min", c.lr_min);
  c.adam.beta1 = doc.get_double("train.beta1", c.adam.beta1);
  c.adam.beta2 = doc.get_double("train.beta2", c.adam.beta2);
  c.adam.eps = doc.get_double("train.eps", c.adam.eps);
  c.flips = doc.get_bool("train.flips", c.flips);
  c.style = doc.get_enum("train.style", c.style, data_style_names());
  c.seed = doc.get_u64("train.seed", c.seed);
  c.data_seed = doc.get_u64("train.data_seed", c.data_seed);
  c.checkpoint_every = doc.get_integer("train.checkpoint_every", c.checkpoint_every);
  c.validate();
  return c;
}

inline std::string train_config_text(const TrainConfig& c) {
  auto num = [](double v) {
    std::ostringstream o;
    o.precision(17);
    o << v;
    return o.str();
  };
  std::map<std::string, std::string> kv{
      {"train.batch", std::to_string(c.batch)},
      {"train.beta1", num(c.adam.beta1)},
      {"train.beta2", num(c.adam.beta2)},
      {"train.checkpoint_every", std::to_string(c.checkpoint_every)},
      {"train.data_seed", std::to_string(c.data_seed)},
      {"train.eps", num(c.adam.eps)},
      {"train.flips", c.flips ? "true" : "false"},
      {"train.frames", std::to_string(c.frames)},
      {"train.lr_max", num(c.lr_max)},
      {"train.lr_min", num(c.lr_min)},
      {"train.patch", std::to_string(c.patch)},
      {"train.seed", std::to_string(c.seed)},
      {"train.sigma_hi", num(c.sigma_hi)},
      {"train.sigma_lo", num(c.sigma_lo)},
      {"train.steps", std::to_string(c.steps)},
      {"train.style", enum_name(c.style, data_style_names())},
      {"train.val_clips", std::to_string(c.val_clips)},
      {"train.val_every", std::to_string(c.val_every)},
      {"train.val_frames", std::to_string(c.val_frames)},
      {"train.val_sigma", num(c.val_sigma)},
      {"train.val_size", std::to_string(c.val_size)},
  };
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

/// Degraded input and clean target of equal geometry.
struct ClipPair {
  VideoClip degraded;
  VideoClip clean;
  double sigma = 0.0;
};

inline SynthStyle pick_style(DataStyle style, std::uint64_t index) {
  if (style == DataStyle::moving_shapes) return SynthStyle::moving_shapes;
  if (style == DataStyle::drifting_texture) return SynthStyle::drifting_texture;
  return index % 2 == 0 ? SynthStyle::moving_shapes : SynthStyle::drifting_texture;
}

/// Training sample `index`: a patch cut from a slightly larger synthetic
/// clip, optionally flipped, with Gaussian noise. Depends only on
/// (config, index).
inline ClipPair training_sample(const TrainConfig& cfg, std::uint64_t index) {
  const std::uint64_t key = CounterRng::derive(cfg.data_seed, index);
  const int margin = 8;
  const VideoClip full =
      gen_synthetic_video(key, std::max(cfg.frames, 2), cfg.patch + margin, cfg.patch + margin, pick_style(cfg.style, index));
  VideoClip clean = sample_patches(full, cfg.patch, 1, key).front();
  if (cfg.frames < clean.frames) {
    clean.values.resize(static_cast<std::size_t>(cfg.frames) * clean.frame_size());
    clean.frames = cfg.frames;
    clean.motion.resize(static_cast<std::size_t>(std::max(cfg.frames - 1, 0)));
  }
  if (cfg.flips) clean = augment_flips(clean, key);
  auto [noisy, sigma] = add_gaussian_noise(clean, cfg.sigma_lo, cfg.sigma_hi, key);
  return {std::move(noisy), std::move(clean), sigma};
}

/// Fixed validation clips at `val_sigma`, disjoint seeds from training.
inline std::vector<ClipPair> validation_set(const TrainConfig& cfg) {
  std::vector<ClipPair> out;
  const std::uint64_t base = CounterRng::derive(cfg.data_seed, CounterRng::hash("validation"));
  for (int j = 0; j < cfg.val_clips; ++j) {
    const std::uint64_t key = CounterRng::derive(base, static_cast<std::uint64_t>(j));
    VideoClip clean = gen_synthetic_video(key, std::max(cfg.val_frames, 2), cfg.val_size, cfg.val_size,
                                          pick_style(cfg.style, static_cast<std::uint64_t>(j)));
    if (cfg.val_frames < clean.frames) {
      clean.values.resize(static_cast<std::size_t>(cfg.val_frames) * clean.frame_size());
      clean.frames = cfg.val_frames;
      clean.motion.resize(static_cast<std::size_t>(cfg.val_frames - 1));
    }
    auto [noisy, sigma] = add_gaussian_noise(clean, cfg.val_sigma, cfg.val_sigma, key);
    out.push_back({std::move(noisy), std::move(clean), sigma});
  }
  return out;
}

/// Restores every clip with `model` and returns the mean per-frame PSNR.
template <typename T>
double validation_psnr(const ShiftNet<T>& model, const std::vector<ClipPair>& set) {
  if (set.empty()) return std::nan("");
  double total = 0.0;
  int count = 0;
  for (const auto& pair : set) {
    const auto restored = to_clips(model.infer(to_tensor<T>(pair.degraded), pair.degraded.frames), pair.degraded.frames);
    for (int t = 0; t < pair.clean.frames; ++t, ++count) total += psnr(restored[0].frame(t), pair.clean.frame(t));
  }
  return total / count;
}

inline double input_psnr(const std::vector<ClipPair>& set) {
  double total = 0.0;
  int count = 0;
  for (const auto& pair : set)
    for (int t = 0; t < pair.clean.frames; ++t, ++count) total += psnr(pair.degraded.frame(t), pair.clean.frame(t));
  return count ? total / count : std::nan("");
}

// ---------------------------------------------------------------------------
// Checkpoints: "GSCKPT1\0", u32 version, u64 config digest, u32 length +
// canonical model text, u64 model seed, u64 step, u8 merged flag,
// u32 parameter count, then per parameter u32 name length + name, u32 rank,
// u32 dims, f32 values; then u8 optimizer flag, and when set u64 Adam step
// followed by first and second moments of every parameter in the same order.
// All integers and floats little endian.

constexpr std::array<char, 8> kCheckpointMagic{'G', 'S', 'C', 'K', 'P', 'T', '1', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  std::uint64_t digest = 0;
  std::uint64_t seed = 0;
  long long step = 0;
  bool merged = false;
  std::vector<std::pair<std::string, Tensor<float>>> params;
  std::optional<OptimState<float>> optim;
};

namespace detail {

inline void put_tensor_values(std::string& out, const Tensor<float>& t) {
  for (float v : t.data()) put_f32(out, v);
}

inline Tensor<float> read_values(ByteReader& r, const Shape& shape, const char* what) {
  std::uint64_t count = 1;
  for (int d : shape) count = count * static_cast<std::uint64_t>(d);
  if (count > r.remaining() / 4) throw FormatError(std::string("truncated while reading ") + what, r.pos());
  Tensor<float> t(shape);
  for (auto& v : t.data()) v = r.f32(what);
  return t;
}

}  // namespace detail

inline std::string encode_checkpoint(const ShiftNet<float>& model, const OptimState<float>* optim, long long step,
                                     bool merged) {
  const std::string text = model_config_text(model.config());
  std::string out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u64(out, CounterRng::hash(text));
  detail::put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  detail::put_u64(out, model.seed());
  detail::put_u64(out, static_cast<std::uint64_t>(step));
  out.push_back(merged ? 1 : 0);
  const auto params = model.params().all();
  detail::put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const Parameter<float>* p : params) {
    detail::put_u32(out, static_cast<std::uint32_t>(p->name.size()));
    out += p->name;
    detail::put_u32(out, static_cast<std::uint32_t>(p->value.rank()));
    for (int d : p->value.shape()) detail::put_u32(out, static_cast<std::uint32_t>(d));
    detail::put_tensor_values(out, p->value);
  }
  out.push_back(optim ? 1 : 0);
  if (optim) {
    detail::put_u64(out, static_cast<std::uint64_t>(optim->step));
    for (const Parameter<float>* p : params) {
      auto it = optim->moments.find(p->name);
      const Tensor<float> zero(p->value.shape());
      detail::put_tensor_values(out, it == optim->moments.end() ? zero : it->second.first);
      detail::put_tensor_values(out, it == optim->moments.end() ? zero : it->second.second);
    }
  }
  return out;
}

/// `expected`, when given, must match the stored config digest unless
/// `allow_mismatch` is set.
inline Checkpoint decode_checkpoint(std::string_view bytes, const ModelConfig* expected = nullptr,
                                    bool allow_mismatch = false) {
  detail::ByteReader r(bytes);
  const auto magic = r.take(kCheckpointMagic.size(), "magic");
  for (std::size_t i = 0; i < kCheckpointMagic.size(); ++i)
    if (magic[i] != kCheckpointMagic[i]) throw FormatError("bad checkpoint magic", i);
  const std::size_t version_at = r.pos();
  if (const auto v = r.u32("version"); v != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(v), version_at);
  Checkpoint ck;
  ck.digest = r.u64("digest");
  const std::uint32_t text_len = r.u32("config length");
  const std::size_t text_at = r.pos();
  const std::string text(r.take(text_len, "config text"));
  if (CounterRng::hash(text) != ck.digest) throw FormatError("config text does not match its digest", text_at);
  try {
    const ConfigDoc doc = ConfigDoc::parse(text);
    ck.config = model_config_from(doc);
    doc.finish({"model"});
  } catch (const ConfigError& e) {
    throw FormatError(std::string("embedded config is invalid: ") + e.what(), text_at);
  }
  if (expected && config_digest(*expected) != ck.digest && !allow_mismatch)
    throw ConfigError("checkpoint", "config digest mismatch (checkpoint " + std::to_string(ck.digest) +
                                        ", supplied " + std::to_string(config_digest(*expected)) +
                                        "); pass the override flag to load anyway");
  ck.seed = r.u64("seed");
  ck.step = static_cast<long long>(r.u64("step"));
  ck.merged = r.u8("merged flag") != 0;
  const std::uint32_t count = r.u32("parameter count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32("name length");
    std::string name(r.take(name_len, "parameter name"));
    const std::size_t rank_at = r.pos();
    const std::uint32_t rank = r.u32("rank");
    if (rank > 8) throw FormatError("implausible rank " + std::to_string(rank) + " for " + name, rank_at);
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint32_t extent = r.u32("dimension");
      if (extent > (1u << 30)) throw FormatError("implausible extent for " + name, r.pos() - 4);
      shape.push_back(static_cast<int>(extent));
    }
    ck.params.emplace_back(std::move(name), detail::read_values(r, shape, "parameter values"));
  }
  if (r.u8("optimizer flag")) {
    OptimState<float> st;
    st.step = static_cast<long long>(r.u64("optimizer step"));
    for (const auto& [name, value] : ck.params) {
      Tensor<float> m = detail::read_values(r, value.shape(), "first moments");
      Tensor<float> v = detail::read_values(r, value.shape(), "second moments");
      st.moments.emplace(name, std::make_pair(std::move(m), std::move(v)));
    }
    ck.optim = std::move(st);
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint", r.pos());
  return ck;
}

inline void save_checkpoint(const ShiftNet<float>& model, const OptimState<float>* optim, long long step, bool merged,
                            const std::filesystem::path& path) {
  detail::write_file(path, encode_checkpoint(model, optim, step, merged));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr,
                                  bool allow_mismatch = false) {
  return decode_checkpoint(detail::read_file(path), expected, allow_mismatch);
}

/// Copies checkpoint values into `model` (merging it first if the checkpoint
/// was merged). Every model parameter must be present with matching shape.
inline void restore_parameters(ShiftNet<float>& model, const Checkpoint& ck) {
  if (ck.merged) model.merge_reparam();
  std::map<std::string, const Tensor<float>*> by_name;
  for (const auto& [name, value] : ck.params) by_name[name] = &value;
  if (by_name.size() != model.params().all().size())
    throw FormatError("checkpoint holds " + std::to_string(by_name.size()) + " parameters, model has " +
                          std::to_string(model.params().all().size()),
                      0);
  for (Parameter<float>* p : model.params().all()) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw FormatError("checkpoint lacks parameter " + p->name, 0);
    if (it->second->shape() != p->value.shape())
      throw FormatError("shape mismatch for " + p->name + ": " + to_string(it->second->shape()) + " vs " +
                            to_string(p->value.shape()),
                        0);
    p->value = *it->second;
  }
}

inline ShiftNet<float> model_from_checkpoint(const Checkpoint& ck) {
  ShiftNet<float> model(ck.config, ck.seed);
  restore_parameters(model, ck);
  return model;
}

// ---------------------------------------------------------------------------

struct TrainOptions {
  std::optional<std::filesystem::path> out_dir;  // checkpoints and metric log
  std::ostream* log = nullptr;                    // metric log lines also go here
  const Checkpoint* resume = nullptr;
  long long stop_after = 0;  // stop early at this step (0: run to cfg.steps)
};

struct TrainResult {
  std::vector<double> losses;  // per executed step
  double initial_loss = 0.0;   // mean of the first smoothing window
  double final_loss = 0.0;     // mean of the last smoothing window
  double val_psnr = std::nan("");
  double input_psnr = std::nan("");
  long long last_step = 0;
};

/// Trains `model` in place. Step s (1-based) uses samples
/// s * batch .. s * batch + batch - 1 and learning rate cosine_lr(s - 1, ...).
/// Results depend only on (model config, cfg), so resuming from a checkpoint
/// written at step k reproduces the uninterrupted run.
inline TrainResult train_loop(ShiftNet<float>& model, const TrainConfig& cfg, const TrainOptions& opt = {},
                              OptimState<float>* state_out = nullptr) {
  cfg.validate();
  OptimState<float> state;
  long long start = 1;
  if (opt.resume) {
    restore_parameters(model, *opt.resume);
    if (!opt.resume->optim) throw FormatError("checkpoint has no optimizer state to resume from", 0);
    state = *opt.resume->optim;
    start = opt.resume->step + 1;
  }
  const auto val = validation_set(cfg);
  TrainResult result;
  result.input_psnr = input_psnr(val);
  std::ofstream file_log;
  if (opt.out_dir) {
    std::filesystem::create_directories(*opt.out_dir);
    file_log.open(*opt.out_dir / "metrics.tsv", std::ios::app);
  }
  auto emit = [&](const std::string& line) {
    if (file_log) file_log << line << '\n' << std::flush;
    if (opt.log) *opt.log << line << '\n' << std::flush;
  };
  auto checkpoint = [&](long long step) {
    if (opt.out_dir) {
      save_checkpoint(model, &state, step, false, *opt.out_dir / ("step_" + std::to_string(step) + ".ckpt"));
      save_checkpoint(model, &state, step, false, *opt.out_dir / "last.ckpt");
    }
  };
  const long long end = opt.stop_after > 0 ? std::min(opt.stop_after, cfg.steps) : cfg.steps;
  for (long long step = start; step <= end; ++step) {
    std::vector<VideoClip> noisy, clean;
    for (int b = 0; b < cfg.batch; ++b) {
      ClipPair pair = training_sample(cfg, static_cast<std::uint64_t>(step) * cfg.batch + b);
      noisy.push_back(std::move(pair.degraded));
      clean.push_back(std::move(pair.clean));
    }
    model.params().zero_grad();
    double loss_value;
    {
      Tape<float> tape;
      const Var<float> out = model.forward(tape, tape.constant(to_tensor<float>(noisy)), cfg.frames);
      const Var<float> loss = l1_loss(out, tape.constant(to_tensor<float>(clean)));
      loss_value = loss.value()[0];
      if (!std::isfinite(loss_value))
        throw NumericError("non-finite training loss at step " + std::to_string(step));
      tape.backward(loss);
      tape.flush_parameter_grads();
    }
    const double lr = cosine_lr(step - 1, cfg.steps, cfg.lr_max, cfg.lr_min);
    adam_step(model.params(), state, lr, cfg.adam);
    result.losses.push_back(loss_value);
    result.last_step = step;
    std::string val_field = "-";
    if ((cfg.val_every > 0 && step % cfg.val_every == 0) || step == cfg.steps) {
      result.val_psnr = validation_psnr(model, val);
      std::ostringstream v;
      v.precision(6);
      v << std::fixed << result.val_psnr;
      val_field = v.str();
    }
    std::ostringstream line;
    line.precision(8);
    line << step << '\t' << loss_value << '\t' << lr << '\t' << val_field;
    emit(line.str());
    if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step != end) checkpoint(step);
  }
  if (result.last_step > 0) checkpoint(result.last_step);
  const std::size_t window = std::max<std::size_t>(1, std::min<std::size_t>(50, result.losses.size() / 10 + 1));
  if (!result.losses.empty()) {
    for (std::size_t i = 0; i < window; ++i) result.initial_loss += result.losses[i] / static_cast<double>(window);
    for (std::size_t i = result.losses.size() - window; i < result.losses.size(); ++i)
      result.final_loss += result.losses[i] / static_cast<double>(window);
  }
  if (state_out) *state_out = state;
  return result;
}

}  // namespace gshift
