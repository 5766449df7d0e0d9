#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>

#include <json.hpp>

#include "crashformer/config.hpp"
#include "crashformer/error.hpp"
#include "temp_dir.hpp"

namespace crashformer::config {
namespace {

namespace fs = std::filesystem;

TEST(ParseConfig, DefaultsAndPartialDocuments) {
  const auto c = parse_config("{}");
  EXPECT_EQ(c.model.K, 4);
  EXPECT_EQ(c.train.max_epochs, 200);
  EXPECT_EQ(c.train.early_stop_patience, 10);
  EXPECT_EQ(c.dataset.train, 0.70);
  EXPECT_EQ(c.experiment.seq_lengths, (std::vector<int>{4, 8, 12, 16}));
  const auto p = parse_config(R"({"model": {"K": 8, "n_modes": 3}, "dataset": {"split": "spatial"}})");
  EXPECT_EQ(p.model.K, 8);
  EXPECT_EQ(p.model.d_model, 64);
  EXPECT_EQ(p.dataset.split, dataset::SplitKind::spatial);
}

TEST(ParseConfig, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(parse_config(R"({"modle": {}})"), ValidationError);
  EXPECT_THROW(parse_config(R"({"model": {"KK": 4}})"), ValidationError);
  EXPECT_THROW(parse_config(R"({"model": {"K": "four"}})"), ValidationError);
  EXPECT_THROW(parse_config(R"({"dataset": {"train": 0.5}})"), ValidationError);
  EXPECT_THROW(parse_config(R"({"dataset": {"class_weights": "bogus"}})"), ValidationError);
  EXPECT_THROW(parse_config(R"({"experiment": {"kind": "bogus"}})"), ValidationError);
  EXPECT_THROW(parse_config("not json"), ValidationError);
}

TEST(ParseConfig, ClassWeightModes) {
  EXPECT_FALSE(parse_config("{}").weight_override().has_value());
  const auto pub = parse_config(R"({"dataset": {"class_weights": "published"}})").weight_override();
  ASSERT_TRUE(pub.has_value());
  EXPECT_EQ(pub->w1, 15.327);
  const auto ex = parse_config(R"({"dataset": {"class_weights": {"w0": 1.0, "w1": 9.0}}})").weight_override();
  ASSERT_TRUE(ex.has_value());
  EXPECT_EQ(ex->w1, 9.0);
}

TEST(ParseConfig, RelativePathsResolveAgainstConfigDir) {
  testing::TempDir dir;
  testing::write_file(dir / "run.json", R"({"paths": {"accidents": "data/a.csv", "weather": "/abs/w.csv"}})");
  const auto c = load_config(dir / "run.json");
  EXPECT_EQ(fs::path(c.paths.accidents), dir.path() / "data/a.csv");
  EXPECT_EQ(c.paths.weather, "/abs/w.csv");
  EXPECT_THROW(load_config(dir / "missing.json"), ValidationError);
}

TEST(Overrides, SetLeavesAndRejectUnknown) {
  const auto base = parse_config("{}");
  const auto c = apply_overrides(base, {"model.K=8", "dataset.split=temporal", "model.img_channels=[4,4,8]",
                                        "train.lr_init=0.01"});
  EXPECT_EQ(c.model.K, 8);
  EXPECT_EQ(c.dataset.split, dataset::SplitKind::temporal);
  EXPECT_EQ(c.model.img_channels, (std::vector<int>{4, 4, 8}));
  EXPECT_EQ(c.train.lr_init, 0.01);
  EXPECT_THROW(apply_overrides(base, {"model.nope=1"}), ValidationError);
  EXPECT_THROW(apply_overrides(base, {"model.K"}), ValidationError);
  EXPECT_THROW(apply_overrides(base, {"model.K=0"}), ValidationError);
}

TEST(Seed, SetsEverySeed) {
  auto c = parse_config("{}");
  set_seed(c, 77);
  EXPECT_EQ(c.model.seed, 77u);
  EXPECT_EQ(c.train.seed, 77u);
  EXPECT_EQ(c.dataset.seed, 77u);
}

TEST(Environment, CacheVariableOverridesTileCache) {
  auto c = parse_config("{}");
  ::setenv("CRASHFORMER_CACHE", "/tmp/tile-cache-test", 1);
  apply_environment(c);
  ::unsetenv("CRASHFORMER_CACHE");
  EXPECT_EQ(c.paths.tile_cache, "/tmp/tile-cache-test");
  auto d = parse_config("{}");
  apply_environment(d);
  EXPECT_EQ(d.paths.tile_cache, "tiles");
}

void expect_sorted(const nlohmann::ordered_json& j, const std::string& where) {
  if (!j.is_object()) return;
  std::string prev;
  for (const auto& [k, v] : j.items()) {
    EXPECT_LT(prev, k) << "keys out of order under " << where;
    prev = k;
    expect_sorted(v, where + "." + k);
  }
}

TEST(Echo, SortedCanonicalJsonAndVersion) {
  auto c = parse_config(R"({"model": {"K": 8, "n_modes": 3}})");
  const auto text = to_json(c);
  expect_sorted(nlohmann::ordered_json::parse(text), "");
  EXPECT_EQ(to_json(parse_config(text)), text);
  testing::TempDir dir;
  echo_config(c, dir / "run");
  EXPECT_EQ(testing::read_file(dir / "run/config.json"), text);
  EXPECT_EQ(testing::read_file(dir / "run/VERSION"), code_version() + "\n");
  EXPECT_EQ(code_version().rfind("crashformer ", 0), 0u);
}

}  // namespace
}  // namespace crashformer::config
