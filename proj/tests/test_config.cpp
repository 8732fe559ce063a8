// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "gshift/config.hpp"
#include "gshift/train.hpp"

namespace gshift {
namespace {

std::string field_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<no error>";
}

TEST(ConfigDoc, ParsesCommentsAndWhitespace) {
  const auto doc = ConfigDoc::parse("# header\n\n  model.preset =  small  # trailing\ntrain.steps=10\n");
  EXPECT_EQ(doc.get_string("model.preset", ""), "small");
  EXPECT_EQ(doc.get_integer("train.steps", 0), 10);
  EXPECT_EQ(doc.get_int("train.batch", 7), 7);
  EXPECT_NO_THROW(doc.finish());
}

TEST(ConfigDoc, RejectsMalformedLines) {
  EXPECT_EQ(field_of([] { ConfigDoc::parse("model.preset\n"); }), "line 1");
  EXPECT_EQ(field_of([] { ConfigDoc::parse("\nnodot = 3\n"); }), "line 2");
  EXPECT_EQ(field_of([] { ConfigDoc::parse("a.b = 1\na.b = 2\n"); }), "a.b");
}

TEST(ConfigDoc, TypedReadsNameTheField) {
  const auto doc = ConfigDoc::parse("a.int = 3x\na.u = -1\na.real = nan?\na.flag = yes\na.list = 1,,2\na.mode = sideways\n");
  EXPECT_EQ(field_of([&] { doc.get_int("a.int", 0); }), "a.int");
  EXPECT_EQ(field_of([&] { doc.get_u64("a.u", 0); }), "a.u");
  EXPECT_EQ(field_of([&] { doc.get_double("a.real", 0); }), "a.real");
  EXPECT_EQ(field_of([&] { doc.get_bool("a.flag", false); }), "a.flag");
  EXPECT_EQ(field_of([&] { doc.get_int_list("a.list", {}); }), "a.list");
  try {
    doc.get_enum("a.mode", TemporalMode::none, temporal_mode_names());
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("forward_only"), std::string::npos);
  }
}

TEST(ConfigDoc, FinishReportsUnusedKeys) {
  const auto doc = ConfigDoc::parse("model.preset = desk\nmodel.widht = 3\nzzz.key = 1\n");
  (void)model_config_from(doc);
  EXPECT_EQ(field_of([&] { doc.finish({"model"}); }), "model.widht");
  const auto other = ConfigDoc::parse("zzz.key = 1\n");
  try {
    other.finish({"model", "train"});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "zzz.key");
    EXPECT_NE(std::string(e.what()).find("unknown section"), std::string::npos);
  }
}

TEST(ConfigDoc, OverridesReplaceValues) {
  auto doc = ConfigDoc::parse("train.steps = 10\n");
  doc.set_override("train.steps = 25");
  doc.set_override("model.preset=base");
  EXPECT_EQ(doc.get_integer("train.steps", 0), 25);
  EXPECT_EQ(doc.get_string("model.preset", ""), "base");
  EXPECT_THROW(doc.set_override("train.steps"), ConfigError);
  EXPECT_THROW(doc.set_override("bad key=1"), ConfigError);
}

class ModelText : public ::testing::TestWithParam<const char*> {};

TEST_P(ModelText, RoundTripsThroughText) {
  ModelConfig c = ModelConfig::preset(GetParam());
  const std::string text = model_config_text(c);
  const auto doc = ConfigDoc::parse(text);
  const ModelConfig back = model_config_from(doc);
  EXPECT_NO_THROW(doc.finish({"model"}));
  EXPECT_EQ(model_config_text(back), text);
  EXPECT_EQ(config_digest(back), config_digest(c));
}

INSTANTIATE_TEST_SUITE_P(Presets, ModelText, ::testing::Values("desk", "small", "base", "plus"));

TEST(ModelConfigFields, DigestTracksEveryChange) {
  const ModelConfig base = ModelConfig::preset("desk");
  for (const char* override : {"model.temporal_mode=forward_only", "model.spatial_mode=none", "model.fusion_kernel=5",
                               "model.gsts_blocks=1", "model.reparam_fusion=false", "model.global_residual=false"}) {
    auto doc = ConfigDoc::parse("");
    doc.set_override(override);
    EXPECT_NE(config_digest(model_config_from(doc)), config_digest(base)) << override;
  }
}

TEST(ModelConfigFields, ValidationNamesTheField) {
  EXPECT_EQ(field_of([] { model_config_from(ConfigDoc::parse("model.displacements = -1,0,1\nmodel.base_length = 4\n")); }),
            "model.displacements");
  EXPECT_EQ(field_of([] { model_config_from(ConfigDoc::parse("model.preset = huge\n")); }), "model.preset");
  EXPECT_EQ(field_of([] { model_config_from(ConfigDoc::parse("model.spatial_mode = diagonal\n")); }),
            "model.spatial_mode");
}

TEST(TrainConfigFields, RoundTripsThroughText) {
  TrainConfig c;
  c.steps = 123;
  c.lr_max = 3.3e-4;
  c.adam.beta2 = 0.99;
  c.style = DataStyle::moving_shapes;
  c.data_seed = 18446744073709551615ull;
  const std::string text = train_config_text(c);
  const auto doc = ConfigDoc::parse(text);
  const TrainConfig back = train_config_from(doc);
  EXPECT_NO_THROW(doc.finish({"train"}));
  EXPECT_EQ(train_config_text(back), text);
  EXPECT_EQ(back.data_seed, c.data_seed);
}

TEST(TrainConfigFields, ValidationNamesTheField) {
  EXPECT_EQ(field_of([] { train_config_from(ConfigDoc::parse("train.patch = 30\n")); }), "train.patch");
  EXPECT_EQ(field_of([] { train_config_from(ConfigDoc::parse("train.steps = 0\n")); }), "train.steps");
  EXPECT_EQ(field_of([] { train_config_from(ConfigDoc::parse("train.sigma_lo = 60\n")); }), "train.sigma_lo");
  EXPECT_EQ(field_of([] { train_config_from(ConfigDoc::parse("train.lr_min = 1\n")); }), "train.lr_min");
  EXPECT_EQ(field_of([] { train_config_from(ConfigDoc::parse("train.style = plasma\n")); }), "train.style");
}

}  // namespace
}  // namespace gshift
