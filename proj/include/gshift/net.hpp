// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "gshift/gsts.hpp"
#include "gshift/modules.hpp"

namespace gshift {

enum class Placement {
  all_scales_except_finest,  // encoder, bottleneck and decoder of the two coarse scales
  decoder_only,              // coarse decoder only
};

struct ModelConfig {
  int in_channels = 3;
  int out_channels = 3;
  int stage1_unets = 2;
  int stage1_width = 8;
  int stage3_unets = 2;
  int stage3_width = 8;
  int fusion_width = 18;
  /// Residual blocks per encoder level and per decoder level of every U-Net.
  int unet_blocks = 1;
  /// GSTS blocks at each placed position of the fusion U-Net.
  int gsts_blocks = 2;
  Placement placement = Placement::all_scales_except_finest;
  GstsOptions gsts;
  /// Output is input + restored residual.
  bool global_residual = true;

  /// Throws ConfigError naming the offending `model.*` key.
  void validate() const {
    auto positive = [](int v, const char* field) {
      if (v < 1) throw ConfigError(field, "must be positive, got " + std::to_string(v));
    };
    positive(in_channels, "model.in_channels");
    positive(out_channels, "model.out_channels");
    positive(stage1_unets, "model.stage1_unets");
    positive(stage1_width, "model.stage1_width");
    positive(stage3_unets, "model.stage3_unets");
    positive(stage3_width, "model.stage3_width");
    positive(fusion_width, "model.fusion_width");
    positive(unet_blocks, "model.unet_blocks");
    positive(gsts_blocks, "model.gsts_blocks");
    if (global_residual && in_channels != out_channels)
      throw ConfigError("model.global_residual", "needs in_channels == out_channels");
    const bool tsm = gsts.temporal == TemporalMode::tsm_bidirectional;
    if (tsm ? fusion_width % 8 != 0 : fusion_width % 2 != 0)
      throw ConfigError("model.fusion_width", std::to_string(fusion_width) +
                                                  (tsm ? " must be divisible by 8" : " must be even"));
    if (gsts.fusion_kernel < 0 || (gsts.fusion_kernel > 0 && gsts.fusion_kernel % 2 == 0))
      throw ConfigError("model.fusion_kernel", "must be 0 (auto) or odd, got " + std::to_string(gsts.fusion_kernel));
    if (gsts.spatial == SpatialMode::grouped_shift) {
      try {
        gsts.spec.validate();
      } catch (const InvalidArgument& e) {
        throw ConfigError("model.displacements", e.what());
      }
      const int incoming = tsm ? fusion_width / 4 : fusion_width / 2;
      if (incoming % gsts.spec.groups() != 0)
        throw ConfigError("model.fusion_width", "propagated width " + std::to_string(incoming) +
                                                    " is not divisible by M=" + std::to_string(gsts.spec.groups()));
    }
  }

  /// Named presets: desk, small, base, plus.
  static ModelConfig preset(std::string_view name) {
    ModelConfig c;
    if (name == "desk") {
      c.gsts.spec = ShiftSpec{{-1, 0, 1}, 1, true};
      c.gsts.fusion_kernel = 3;
      return c;
    }
    ShiftSpec wide{{-9, -5, 0, 5, 9}, 5, true};
    if (name == "small") {
      c.stage1_unets = c.stage3_unets = 3;
      c.stage1_width = c.stage3_width = 14;
      c.fusion_width = 50;
      c.gsts.spec = wide;
      return c;
    }
    if (name == "base" || name == "plus") {
      c.stage1_unets = c.stage3_unets = 5;
      c.stage1_width = c.stage3_width = 24;
      c.fusion_width = 100;
      c.unet_blocks = 2;
      c.gsts_blocks = 4;
      c.gsts.spec = wide;
      if (name == "plus") c.placement = Placement::decoder_only;
      return c;
    }
    throw ConfigError("model.preset", "unknown preset '" + std::string(name) + "'");
  }
};

/// Three-scale U-Net with residual channel-attention blocks, average-pool
/// down, bilinear up, CABs on the skip connections and widths c, 2c, 4c.
template <typename T>
class SlimUNet {
 public:
  SlimUNet() = default;
  SlimUNet(ParamStore<T>& store, const std::string& name, int width, int blocks) : width_(width) {
    const int w[3] = {width, 2 * width, 4 * width};
    for (int l = 0; l < 3; ++l)
      for (int b = 0; b < blocks; ++b)
        enc_[l].emplace_back(store, name + ".enc" + std::to_string(l) + "." + std::to_string(b), w[l]);
    for (int l = 0; l < 2; ++l) {
      for (int b = 0; b < blocks; ++b)
        dec_[l].emplace_back(store, name + ".dec" + std::to_string(l) + "." + std::to_string(b), w[l]);
      skip_[l] = Cab<T>(store, name + ".skip" + std::to_string(l), w[l]);
      down_[l] = Conv<T>(store, name + ".down" + std::to_string(l), w[l], w[l + 1], 1);
      up_[l] = Conv<T>(store, name + ".up" + std::to_string(l), w[l + 1], w[l], 1);
    }
  }

  Var<T> operator()(Tape<T>& tape, const Var<T>& x) const {
    const Var<T> e0 = run(tape, enc_[0], x);
    const Var<T> e1 = run(tape, enc_[1], down_[0](tape, avg_pool2(e0)));
    const Var<T> e2 = run(tape, enc_[2], down_[1](tape, avg_pool2(e1)));
    const Var<T> d1 = run(tape, dec_[1], add(bilinear_up2(up_[1](tape, e2)), skip_[1](tape, e1)));
    const Var<T> d0 = run(tape, dec_[0], add(bilinear_up2(up_[0](tape, d1)), skip_[0](tape, e0)));
    return add(x, d0);
  }

  long long macs(int h, int w) const {
    long long m = 0;
    for (int l = 0; l < 3; ++l)
      for (const auto& b : enc_[l]) m += b.macs(h >> l, w >> l);
    for (int l = 0; l < 2; ++l) {
      for (const auto& b : dec_[l]) m += b.macs(h >> l, w >> l);
      m += skip_[l].macs(h >> l, w >> l) + down_[l].macs(h >> (l + 1), w >> (l + 1)) +
           up_[l].macs(h >> (l + 1), w >> (l + 1));
    }
    return m;
  }

 private:
  static Var<T> run(Tape<T>& tape, const std::vector<Cab<T>>& blocks, Var<T> x) {
    for (const auto& b : blocks) x = b(tape, x);
    return x;
  }

  int width_ = 0;
  std::vector<Cab<T>> enc_[3], dec_[2];
  Cab<T> skip_[2];
  Conv<T> down_[2], up_[2];
};

/// Multi-frame fusion U-Net of constant width. Positions at the two coarse
/// scales hold either CABs or a stack of GSTS blocks; the finest scale is
/// always frame-wise.
template <typename T>
class FusionUNet {
 public:
  FusionUNet() = default;
  FusionUNet(ParamStore<T>& store, const std::string& name, const ModelConfig& cfg) {
    int counter = 0;
    auto make = [&](const std::string& pos, bool gsts) {
      Position p;
      if (gsts) {
        for (int b = 0; b < cfg.gsts_blocks; ++b, ++counter) {
          Direction dir = Direction::forward;
          if (cfg.gsts.temporal == TemporalMode::alternating && counter % 2 == 1) dir = Direction::backward;
          p.gsts.emplace_back(store, name + "." + pos + ".gsts" + std::to_string(b), cfg.fusion_width, dir, cfg.gsts);
        }
      } else {
        for (int b = 0; b < cfg.unet_blocks; ++b)
          p.cabs.emplace_back(store, name + "." + pos + "." + std::to_string(b), cfg.fusion_width);
      }
      return p;
    };
    const bool all = cfg.placement == Placement::all_scales_except_finest;
    enc0_ = make("enc0", false);
    enc1_ = make("enc1", all);
    enc2_ = make("enc2", all);
    dec1_ = make("dec1", true);
    dec0_ = make("dec0", false);
    skip0_ = Cab<T>(store, name + ".skip0", cfg.fusion_width);
    skip1_ = Cab<T>(store, name + ".skip1", cfg.fusion_width);
    gsts_count_ = counter;
  }

  Var<T> operator()(Tape<T>& tape, const Var<T>& x, int frames, GstsTrace<T>* trace) const {
    const Var<T> e0 = enc0_.run(tape, x, frames, trace);
    const Var<T> e1 = enc1_.run(tape, avg_pool2(e0), frames, trace);
    const Var<T> e2 = enc2_.run(tape, avg_pool2(e1), frames, trace);
    const Var<T> d1 = dec1_.run(tape, add(bilinear_up2(e2), skip1_(tape, e1)), frames, trace);
    return dec0_.run(tape, add(bilinear_up2(d1), skip0_(tape, e0)), frames, trace);
  }

  long long macs(int h, int w) const {
    return enc0_.macs(h, w) + dec0_.macs(h, w) + skip0_.macs(h, w) + enc1_.macs(h / 2, w / 2) +
           dec1_.macs(h / 2, w / 2) + skip1_.macs(h / 2, w / 2) + enc2_.macs(h / 4, w / 4);
  }

  int gsts_count() const noexcept { return gsts_count_; }

  bool merge(ParamStore<T>& store) {
    bool merged = false;
    for (Position* p : {&enc1_, &enc2_, &dec1_})
      for (auto& b : p->gsts) merged = b.merge(store) || merged;
    return merged;
  }

 private:
  struct Position {
    std::vector<Cab<T>> cabs;
    std::vector<GstsBlock<T>> gsts;

    Var<T> run(Tape<T>& tape, Var<T> x, int frames, GstsTrace<T>* trace) const {
      for (const auto& b : cabs) x = b(tape, x);
      for (const auto& b : gsts) x = b(tape, x, frames, trace);
      return x;
    }
    long long macs(int h, int w) const {
      long long m = 0;
      for (const auto& b : cabs) m += b.macs(h, w);
      for (const auto& b : gsts) m += b.macs(h, w);
      return m;
    }
  };

  Position enc0_, enc1_, enc2_, dec1_, dec0_;
  Cab<T> skip0_, skip1_;
  int gsts_count_ = 0;
};

/// Three-stage restoration network on N = clips * frames items:
/// frame-wise feature extraction, multi-frame fusion, frame-wise restoration.
template <typename T>
class ShiftNet {
 public:
  ShiftNet(const ModelConfig& cfg, std::uint64_t seed)
      : cfg_(cfg), seed_(seed), store_(std::make_unique<ParamStore<T>>(seed)) {
    cfg_.validate();
    ParamStore<T>& s = *store_;
    head1_ = Conv<T>(s, "stage1.head", cfg_.in_channels, cfg_.stage1_width, 3);
    for (int i = 0; i < cfg_.stage1_unets; ++i)
      unets1_.emplace_back(s, "stage1.unet" + std::to_string(i), cfg_.stage1_width, cfg_.unet_blocks);
    tail1_ = Conv<T>(s, "stage1.tail", cfg_.stage1_width, cfg_.fusion_width, 1);
    fusion_ = FusionUNet<T>(s, "stage2", cfg_);
    head3_ = Conv<T>(s, "stage3.head", cfg_.in_channels + cfg_.fusion_width, cfg_.stage3_width, 3);
    for (int i = 0; i < cfg_.stage3_unets; ++i)
      unets3_.emplace_back(s, "stage3.unet" + std::to_string(i), cfg_.stage3_width, cfg_.unet_blocks);
    tail3_ = Conv<T>(s, "stage3.tail", cfg_.stage3_width, cfg_.out_channels, 3);
    // Untrained models start as the identity when the global residual is on.
    if (cfg_.global_residual) tail3_.weight().value.fill(T(0));
  }

  ShiftNet(ShiftNet&&) noexcept = default;
  ShiftNet& operator=(ShiftNet&&) noexcept = default;
  ShiftNet(const ShiftNet&) = delete;
  ShiftNet& operator=(const ShiftNet&) = delete;

  /// input: [N, C_in, H, W] with H, W divisible by 4. Returns [N, c_f, H, W].
  Var<T> stage1(Tape<T>& tape, const Var<T>& input) const {
    check_input(input);
    Var<T> x = head1_(tape, input);
    for (const auto& u : unets1_) x = u(tape, x);
    return tail1_(tape, x);
  }

  Var<T> stage2(Tape<T>& tape, const Var<T>& features, int frames, GstsTrace<T>* trace = nullptr) const {
    return fusion_(tape, features, frames, trace);
  }

  Var<T> stage3(Tape<T>& tape, const Var<T>& input, const Var<T>& aggregated) const {
    const Dims4 a = dims4(input.shape()), b = dims4(aggregated.shape());
    if (a.n != b.n || a.h != b.h || a.w != b.w)
      detail::fail("stage3: input ", to_string(input.shape()), " and features ", to_string(aggregated.shape()),
                   " disagree on frames or extent");
    Var<T> x = head3_(tape, concat_channels<T>({input, aggregated}));
    for (const auto& u : unets3_) x = u(tape, x);
    x = tail3_(tape, x);
    return cfg_.global_residual ? add(input, x) : x;
  }

  Var<T> forward(Tape<T>& tape, const Var<T>& input, int frames, GstsTrace<T>* trace = nullptr) const {
    return stage3(tape, input, stage2(tape, stage1(tape, input), frames, trace));
  }

  /// Forward pass without gradient recording.
  Tensor<T> infer(const Tensor<T>& input, int frames) const {
    Tape<T> tape;
    tape.set_grad_enabled(false);
    return forward(tape, tape.constant(input), frames).value();
  }

  long long param_count() const { return store_->scalar_count(); }

  /// 2 * multiply-accumulates of all convolutions for one frame.
  long long flops_per_frame(int h, int w) const {
    long long m = head1_.macs(h, w) + tail1_.macs(h, w) + head3_.macs(h, w) + tail3_.macs(h, w);
    for (const auto& u : unets1_) m += u.macs(h, w);
    for (const auto& u : unets3_) m += u.macs(h, w);
    m += fusion_.macs(h, w);
    return 2 * m;
  }

  int gsts_block_count() const noexcept { return fusion_.gsts_count(); }

  /// Folds re-parameterized branches. Returns false if nothing was left to merge.
  bool merge_reparam() { return fusion_.merge(*store_); }

  ParamStore<T>& params() noexcept { return *store_; }
  const ParamStore<T>& params() const noexcept { return *store_; }
  const ModelConfig& config() const noexcept { return cfg_; }
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  void check_input(const Var<T>& input) const {
    const Dims4 d = dims4(input.shape());
    if (d.c != cfg_.in_channels) detail::fail("model expects ", cfg_.in_channels, " input channels, got ", d.c);
    if (d.h % 4 != 0 || d.w % 4 != 0)
      detail::fail("frame extent ", d.h, "x", d.w, " must be divisible by 4 for the three-scale U-Nets");
  }

  ModelConfig cfg_;
  std::uint64_t seed_;
  std::unique_ptr<ParamStore<T>> store_;
  Conv<T> head1_, tail1_, head3_, tail3_;
  std::vector<SlimUNet<T>> unets1_, unets3_;
  FusionUNet<T> fusion_;
};

}  // namespace gshift
