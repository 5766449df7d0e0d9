#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "container_fixture.hpp"
#include "crashformer/checkpoint.hpp"
#include "crashformer/error.hpp"
#include "crashformer/train.hpp"
#include "scripted_trainable.hpp"
#include "temp_dir.hpp"

namespace crashformer::train {
namespace {

using testing::improve_then_worsen;
using testing::iota_indices;
using testing::ScriptedTrainable;

TEST(LrStep, PlateauSchedule) {
  TrainConfig cfg;
  PlateauState s{1e-3, 0};
  for (int i = 0; i < 4; ++i) s = lr_step(s, false, cfg);
  EXPECT_EQ(s.lr, 1e-3);
  s = lr_step(s, false, cfg);
  EXPECT_DOUBLE_EQ(s.lr, 9e-4);
  EXPECT_EQ(s.epochs_without_improvement, 0);
  s = lr_step(PlateauState{1e-3, 4}, true, cfg);
  EXPECT_EQ(s.lr, 1e-3);
  EXPECT_EQ(s.epochs_without_improvement, 0);
  EXPECT_EQ(lr_step(PlateauState{1.05e-6, 4}, false, cfg).lr, 1e-6);
}

TEST(EarlyStop, Patience) {
  TrainConfig cfg;
  EXPECT_FALSE(early_stop({5, 4, 3, 2, 1}, cfg));
  std::vector<double> flat{1.0};
  for (int i = 0; i < 9; ++i) flat.push_back(1.0);
  EXPECT_FALSE(early_stop(flat, cfg));
  flat.push_back(1.0);
  EXPECT_TRUE(early_stop(flat, cfg));
  std::vector<double> reset{1.0};
  for (int i = 0; i < 9; ++i) reset.push_back(1.5);
  reset.push_back(0.5);
  EXPECT_FALSE(early_stop(reset, cfg));
  // Improvements smaller than min_improvement do not count.
  std::vector<double> tiny{1.0};
  for (int i = 1; i <= 10; ++i) tiny.push_back(1.0 - 1e-8 * i);
  EXPECT_TRUE(early_stop(tiny, cfg));
}

TEST(TrainLoop, StopsTenEpochsAfterBestAndRestoresIt) {
  ScriptedTrainable t(improve_then_worsen(3));
  TrainConfig cfg;
  const auto r = train_loop(t, iota_indices(8), iota_indices(2), cfg);
  EXPECT_EQ(t.epochs_run(), 13);
  ASSERT_EQ(r.history.epochs.size(), 13u);
  EXPECT_EQ(r.history.best_epoch, 3);
  EXPECT_EQ(t.weight(), t.weight_at_epoch(3));
  EXPECT_NE(t.weight(), t.weight_at_epoch(13));
  double best = std::numeric_limits<double>::infinity();
  for (const auto& e : r.history.epochs) best = std::min(best, e.val_loss);
  EXPECT_NEAR(r.history.best_val_loss, best, 1e-12);
  for (int e = 1; e <= 8; ++e) EXPECT_EQ(r.history.epochs[static_cast<std::size_t>(e - 1)].lr, 1e-3);
  for (int e = 9; e <= 13; ++e) EXPECT_DOUBLE_EQ(r.history.epochs[static_cast<std::size_t>(e - 1)].lr, 9e-4);
}

TEST(TrainLoop, LrDecaysGeometricallyThenClamps) {
  ScriptedTrainable t([](int e) { return 1.0 + e; });
  TrainConfig cfg;
  cfg.early_stop_patience = 1000;
  cfg.max_epochs = 400;
  const auto r = train_loop(t, iota_indices(4), iota_indices(1), cfg);
  ASSERT_EQ(r.history.epochs.size(), 400u);
  double expected = 1e-3;
  for (std::size_t i = 0; i < r.history.epochs.size(); ++i) {
    const int epoch = static_cast<int>(i) + 1;
    // Counter reaches 5 after epochs 6, 11, 16, ...; epoch 1 is the first best.
    if (epoch > 6 && (epoch - 2) % 5 == 0) expected = std::max(expected * 0.9, 1e-6);
    EXPECT_NEAR(r.history.epochs[i].lr, expected, 1e-18) << "epoch " << epoch;
    if (i > 0) EXPECT_LE(r.history.epochs[i].lr, r.history.epochs[i - 1].lr);
    EXPECT_GE(r.history.epochs[i].lr, 1e-6);
  }
  EXPECT_EQ(r.history.epochs.back().lr, 1e-6);
  EXPECT_EQ(r.history.best_epoch, 1);
}

TEST(TrainLoop, EpochCountBoundedByMax) {
  ScriptedTrainable t([](int e) { return 1.0 / e; });
  const auto r = train_loop(t, iota_indices(4), iota_indices(1), TrainConfig{});
  EXPECT_EQ(r.history.epochs.size(), 200u);
  EXPECT_EQ(r.history.best_epoch, 200);
}

TEST(TrainLoop, NonFiniteLossNamesEpochAndBatch) {
  ScriptedTrainable t([](int) { return 1.0; },
                      [](int e) { return e == 2 ? std::numeric_limits<double>::quiet_NaN() : 1.0; });
  TrainConfig cfg;
  cfg.batch_size = 4;
  try {
    train_loop(t, iota_indices(8), iota_indices(1), cfg);
    FAIL() << "expected RuntimeFailure";
  } catch (const RuntimeFailure& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 2, batch 0"), std::string::npos) << e.what();
  }
  ScriptedTrainable v([](int e) { return e == 3 ? std::numeric_limits<double>::infinity() : 1.0; });
  EXPECT_THROW(train_loop(v, iota_indices(8), iota_indices(1), cfg), RuntimeFailure);
}

TEST(TrainLoop, RejectsEmptySets) {
  ScriptedTrainable t([](int) { return 1.0; });
  EXPECT_THROW(train_loop(t, {}, iota_indices(1), TrainConfig{}), ValidationError);
  EXPECT_THROW(train_loop(t, iota_indices(2), {}, TrainConfig{}), ValidationError);
}

TEST(Adam, FirstStepMovesByLr) {
  nn::Param p("p", {3});
  p.value[0] = 1.0;
  p.grad[0] = 0.5;
  p.grad[1] = -2.0;
  p.grad[2] = 0.0;
  Adam adam({&p});
  adam.step(0.1);
  // Bias-corrected first step is lr * sign(g) (up to eps).
  EXPECT_NEAR(p.value[0], 0.9, 1e-7);
  EXPECT_NEAR(p.value[1], 0.1, 1e-7);
  EXPECT_EQ(p.value[2], 0.0);
}

TEST(Adam, MinimisesQuadratic) {
  nn::Param p("p", {2});
  p.value[0] = 3.0;
  p.value[1] = -4.0;
  Adam adam({&p});
  for (int i = 0; i < 3000; ++i) {
    p.grad[0] = 2.0 * (p.value[0] - 1.0);
    p.grad[1] = 2.0 * (p.value[1] + 2.0);
    adam.step(0.01);
  }
  EXPECT_NEAR(p.value[0], 1.0, 1e-3);
  EXPECT_NEAR(p.value[1], -2.0, 1e-3);
}

TEST(ClipGradNorm, ScalesOnlyAboveThreshold) {
  nn::Param a("a", {2}), b("b", {1});
  a.grad[0] = 3.0;
  a.grad[1] = 4.0;
  b.grad[0] = 12.0;
  EXPECT_DOUBLE_EQ(clip_grad_norm({&a, &b}, 5.0), 13.0);
  EXPECT_NEAR(std::hypot(a.grad[0], a.grad[1], b.grad[0]), 5.0, 1e-12);
  EXPECT_NEAR(a.grad[0] / b.grad[0], 0.25, 1e-12);
  EXPECT_NEAR(clip_grad_norm({&a, &b}, 10.0), 5.0, 1e-12);
  EXPECT_NEAR(std::hypot(a.grad[0], a.grad[1], b.grad[0]), 5.0, 1e-12);
}

class PlantedData : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(21);
    container_ = dataset::build_container(testing::planted_city(dir_ / "tiles", rng), 4, dataset::SplitSpec{});
    bank_ = ImageBank::load(container_, 16);
  }
  ::crashformer::testing::TempDir dir_;
  dataset::Container container_;
  ImageBank bank_;
};

TEST_F(PlantedData, MakeBatchStoresEachTileOnce) {
  const std::vector<std::size_t> idx{0, 1, 2, 60, 61, 0};
  const auto b = make_batch(container_, bank_, idx);
  ASSERT_EQ(b.size(), 6u);
  std::set<std::uint32_t> refs;
  for (auto i : idx) refs.insert(container_.samples[i].tile_ref);
  EXPECT_EQ(b.images.dim(0), refs.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& s = container_.samples[idx[i]];
    EXPECT_EQ(b.labels[i], s.label);
    EXPECT_EQ(b.history[i * 4 * 27 + 5], s.history[5]);
    EXPECT_EQ(b.demo[i * 144 + 7], s.demo[7]);
    const auto& planes = bank_.planes(s.tile_ref);
    EXPECT_EQ(b.images[b.image_index[i] * 3 * 16 * 16 + 17], planes[17]);
  }
  EXPECT_EQ(b.image_index[0], b.image_index[5]);
}

TrainResult fit(const dataset::Container& c, const ImageBank& bank, model::Classifier& m, int epochs) {
  TrainConfig cfg;
  cfg.max_epochs = epochs;
  cfg.batch_size = 32;
  cfg.lr_init = 3e-3;
  cfg.seed = 4;
  ClassifierTrainable t(m, c, bank, c.class_weights);
  return train_loop(t, c.split.indices(dataset::Part::train), c.split.indices(dataset::Part::val), cfg);
}

TEST_F(PlantedData, LossDecreasesAndRunsAreDeterministic) {
  auto a = model::make_classifier("crashformer", testing::micro_model());
  auto b = model::make_classifier("crashformer", testing::micro_model());
  const auto ra = fit(container_, bank_, *a, 6);
  const auto rb = fit(container_, bank_, *b, 6);
  EXPECT_LT(ra.history.epochs.back().train_loss, ra.history.epochs.front().train_loss);
  EXPECT_EQ(ra.history.to_jsonl(), rb.history.to_jsonl());
  const auto pa = a->parameters(), pb = b->parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value, pb[i]->value) << pa[i]->name;
}

TEST_F(PlantedData, ReturnedWeightsReproduceBestValLoss) {
  auto m = model::make_classifier("dlinear", testing::micro_model());
  const auto r = fit(container_, bank_, *m, 8);
  ClassifierTrainable t(*m, container_, bank_, container_.class_weights);
  EXPECT_NEAR(t.evaluate(container_.split.indices(dataset::Part::val)), r.history.best_val_loss, 1e-12);
}

TEST(History, JsonLinesOnePerEpoch) {
  TrainHistory h;
  h.epochs.push_back({1, 0.5, 0.6, 1e-3, 2.5});
  h.epochs.push_back({2, 0.4, 0.7, 1e-3, 9.0});
  const auto s = h.to_jsonl();
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 2);
  EXPECT_EQ(s.find("wall"), std::string::npos);
  EXPECT_NE(s.find("\"epoch\":2"), std::string::npos);
}

}  // namespace
}  // namespace crashformer::train
