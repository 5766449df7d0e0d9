#include <gtest/gtest.h>

#include <filesystem>
#include <numeric>
#include <sstream>

#include "container_fixture.hpp"
#include "crashformer/baselines.hpp"
#include "crashformer/checkpoint.hpp"
#include "crashformer/error.hpp"
#include "crashformer/experiment.hpp"
#include "crashformer/metrics.hpp"
#include "crashformer/model.hpp"
#include "crashformer/published.hpp"
#include "crashformer/report.hpp"
#include "gradcheck.hpp"
#include "temp_dir.hpp"

namespace crashformer::eval {
namespace {

namespace fs = std::filesystem;
using testing::check_entries;
using testing::kGradTol;
using testing::random_tensor;

TEST(F1, ClosedForms) {
  const std::vector<std::uint8_t> labels{1, 1, 1, 0}, preds{1, 1, 0, 1};
  const auto m = f1_per_class(preds, labels);
  EXPECT_EQ(m.tp, 2u);
  EXPECT_EQ(m.fp, 1u);
  EXPECT_EQ(m.fn, 1u);
  EXPECT_EQ(m.tn, 0u);
  EXPECT_DOUBLE_EQ(m.f1_1, 2.0 / 3.0);
  EXPECT_EQ(m.f1_0, 0.0);
  const auto same = f1_per_class(labels, labels);
  EXPECT_EQ(same.f1_1, 1.0);
  EXPECT_EQ(same.f1_0, 1.0);
  // No positives predicted or present: 0/0 conventions.
  const std::vector<std::uint8_t> zeros(5, 0);
  const auto z = f1_per_class(zeros, zeros);
  EXPECT_EQ(z.f1_1, 0.0);
  EXPECT_EQ(z.precision_1, 0.0);
  EXPECT_EQ(z.f1_0, 1.0);
  EXPECT_THROW(f1_per_class(zeros, labels), ValidationError);
  EXPECT_THROW(f1_per_class({}, {}), ValidationError);
}

TEST(F1, MatchesRecountAndBitFlipSymmetry) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::uint8_t> p(50), y(50);
    for (std::size_t i = 0; i < 50; ++i) {
      p[i] = static_cast<std::uint8_t>(rng.below(2));
      y[i] = static_cast<std::uint8_t>(rng.below(2));
    }
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < 50; ++i) {
      tp += p[i] && y[i];
      fp += p[i] && !y[i];
      fn += !p[i] && y[i];
    }
    const double expected = tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
    const auto m = f1_per_class(p, y);
    EXPECT_NEAR(m.f1_1, expected, 1e-15);
    EXPECT_EQ(m.n(), 50u);
    std::vector<std::uint8_t> fp_(50), fy(50);
    for (std::size_t i = 0; i < 50; ++i) {
      fp_[i] = 1 - p[i];
      fy[i] = 1 - y[i];
    }
    const auto f = f1_per_class(fp_, fy);
    EXPECT_DOUBLE_EQ(f.f1_1, m.f1_0);
    EXPECT_DOUBLE_EQ(f.f1_0, m.f1_1);
  }
}

TEST(Argmax, TiesGoToZero) {
  nn::Tensor probs({3, 2});
  probs[0] = 0.5, probs[1] = 0.5;
  probs[2] = 0.4, probs[3] = 0.6;
  probs[4] = 0.7, probs[5] = 0.3;
  EXPECT_EQ(argmax_predictions(probs), (std::vector<std::uint8_t>{0, 1, 0}));
}

TEST(PublishedResults, SweepAveragesAndGains) {
  namespace p = published;
  for (std::size_t c = 0; c < 4; ++c) {
    double s1 = 0.0, s0 = 0.0;
    for (const auto& row : p::kSweep) {
      s1 += row.f1_1[c];
      s0 += row.f1_0[c];
    }
    EXPECT_NEAR(s1 / 10.0, p::kSweepAverageF1_1[c], 1e-5);
    EXPECT_NEAR(s0 / 10.0, p::kSweepAverageF1_0[c], 1e-5);
  }
  for (std::size_t i = 0; i < 3; ++i) {
    const double gain = relative_improvement_percent(p::kSweepAverageF1_1[0], p::kSweepAverageF1_1[i + 1]);
    EXPECT_NEAR(gain, p::kSweepStatedGains[i], 0.01) << "K=" << p::kSweepLengths[i + 1];
  }
}

TEST(PublishedResults, HoustonSpatialGain) {
  namespace p = published;
  EXPECT_EQ(p::kSweep[0].city, "Houston");
  EXPECT_EQ(p::kSweep[0].f1_1[0], p::kSpatialHoustonF1_1);
  EXPECT_EQ(p::kAblation[0].f1_1[0], p::kSpatialHoustonF1_1);
  EXPECT_NEAR(relative_improvement_percent(p::kSpatialHoustonF1_1, p::kSpatialBestBaselineF1_1), p::kSpatialStatedGain,
              5e-4);
}

TEST(PublishedResults, AblationColumnsMatchArms) {
  const auto arms = arms_for(ExperimentKind::ablation, 4, {});
  ASSERT_EQ(arms.size(), published::kAblationArms.size());
  for (std::size_t i = 0; i < arms.size(); ++i) EXPECT_EQ(arms[i].name, published::kAblationArms[i]);
  EXPECT_TRUE(arms[0].use_img && arms[0].use_demo);
  EXPECT_TRUE(!arms[1].use_img && arms[1].use_demo);
  EXPECT_TRUE(arms[2].use_img && !arms[2].use_demo);
  EXPECT_TRUE(!arms[3].use_img && !arms[3].use_demo);
  // Three printed averages do not match their own city rows: F1_1 of wo_img
  // and wo_img_demo, and F1_0 of wo_img_demo.
  const std::array<double, 4> recomputed{0.57996, 0.56840, 0.57325, 0.56814};
  const std::array<double, 4> recomputed0{0.97665, 0.97417, 0.97596, 0.97563};
  for (std::size_t c = 0; c < 4; ++c) {
    double s1 = 0.0, s0 = 0.0;
    for (const auto& row : published::kAblation) {
      s1 += row.f1_1[c];
      s0 += row.f1_0[c];
    }
    EXPECT_NEAR(s1 / 10.0, recomputed[c], 1e-9);
    EXPECT_NEAR(s0 / 10.0, recomputed0[c], 1e-9);
  }
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(recomputed0[c], published::kAblationAverageF1_0[c], 1e-9);
  EXPECT_NEAR(recomputed[0], published::kAblationAverageF1_1[0], 1e-9);
  EXPECT_NEAR(recomputed[2], published::kAblationAverageF1_1[2], 1e-9);
}

TEST(RelativeImprovement, EdgeCases) {
  EXPECT_EQ(relative_improvement_percent(0.5, 0.5), 0.0);
  EXPECT_DOUBLE_EQ(relative_improvement_percent(0.6, 0.5), 20.0);
  EXPECT_TRUE(std::isinf(relative_improvement_percent(0.1, 0.0)));
}

ExperimentReport fixture_report() {
  ExperimentReport r;
  r.kind = ExperimentKind::seq_sweep;
  for (std::size_t i = 0; i < 4; ++i) {
    ArmResult a;
    a.spec = {"len" + std::to_string(published::kSweepLengths[i]), "crashformer", published::kSweepLengths[i]};
    a.metrics.f1_1 = published::kSweepAverageF1_1[i];
    a.metrics.f1_0 = published::kSweepAverageF1_0[i];
    a.metrics.tp = 10 + i;
    a.metrics.tn = 100;
    r.arms.push_back(a);
  }
  r.improvements = improvements_over_first(r.arms);
  r.provenance = R"({"seed":0})";
  return r;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

TEST(Report, CsvSchemaAndRecomputedImprovements) {
  const auto r = fixture_report();
  const auto rows = parse_csv(render_csv(r));
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"arm", "f1_1", "f1_0", "precision_1", "recall_1", "n"}));
  EXPECT_EQ(rows[1][0], "len4");
  EXPECT_EQ(std::stod(rows[2][1]), published::kSweepAverageF1_1[1]);

  const auto imp = parse_csv(render_improvements_csv(r));
  ASSERT_EQ(imp.size(), 4u);
  for (std::size_t i = 1; i < imp.size(); ++i) {
    const double ref = std::stod(imp[i][2]), arm = std::stod(imp[i][3]);
    EXPECT_NEAR(std::stod(imp[i][4]), (ref / arm - 1.0) * 100.0, 1e-9);
    EXPECT_NEAR(std::stod(imp[i][4]), published::kSweepStatedGains[i - 1], 0.01);
  }
}

TEST(Report, DeterministicAndJsonRoundTrip) {
  const auto r = fixture_report();
  EXPECT_EQ(render_csv(r), render_csv(fixture_report()));
  EXPECT_EQ(render_svg(r, "t"), render_svg(fixture_report(), "t"));
  const auto back = report_from_json(report_to_json(r));
  EXPECT_EQ(report_to_json(back), report_to_json(r));
  EXPECT_EQ(render_csv(back), render_csv(r));
  EXPECT_NE(render_svg(r, "t").find("<svg"), std::string::npos);
  testing::TempDir a, b;
  write_report(r, a.path().string(), "sweep");
  write_report(r, b.path().string(), "sweep");
  for (const char* f : {"report.csv", "improvements.csv", "report.svg", "report.json"}) {
    EXPECT_EQ(testing::read_file(a / f), testing::read_file(b / f)) << f;
  }
}

model::ModelConfig baseline_config() {
  auto c = testing::micro_model();
  c.d_model = 6;
  c.d_ff = 10;
  return c;
}

model::Batch random_batch(const model::ModelConfig& c, std::size_t B, Rng& rng) {
  model::Batch b;
  b.history = random_tensor({B, static_cast<std::size_t>(c.K), 27}, rng);
  b.demo = random_tensor({B, 144}, rng);
  const auto S = static_cast<std::size_t>(c.img_size);
  b.images = nn::Tensor({B, 3, S, S});
  for (auto& v : b.images.values()) v = rng.uniform();
  for (std::size_t i = 0; i < B; ++i) {
    b.image_index.push_back(i);
    b.labels.push_back(static_cast<std::uint8_t>(i % 2));
  }
  return b;
}

void gradient_check(model::Classifier& m, const model::Batch& b) {
  const dataset::ClassWeights w{0.516, 15.327};
  m.zero_grad();
  m.backward(model::weighted_ce(m.forward(b, false), b.labels, w).dlogits);
  const auto loss = [&] { return model::weighted_ce(m.forward(b, false), b.labels, w).loss; };
  for (auto* p : m.parameters()) EXPECT_LT(check_entries(p->value, p->grad, loss), kGradTol) << m.kind() << " " << p->name;
}

TEST(DLinear, ShapeZeroParamsAndGradients) {
  const auto cfg = baseline_config();
  DLinear m(cfg);
  Rng rng(2);
  const auto b = random_batch(cfg, 3, rng);
  const auto out = m.forward(b, false);
  EXPECT_EQ(out.shape(), (std::vector<std::size_t>{3, 2}));
  gradient_check(m, random_batch(cfg, 1, rng));
  for (auto* p : m.parameters()) p->value.zero();
  const auto probs = m.predict(b).probs;
  for (double v : probs.values()) EXPECT_EQ(v, 0.5);
}

TEST(VanillaTransformer, ShapeAttentionAndGradients) {
  const auto cfg = baseline_config();
  VanillaTransformer m(cfg);
  Rng rng(3);
  const auto b = random_batch(cfg, 2, rng);
  EXPECT_EQ(m.forward(b, false).shape(), (std::vector<std::size_t>{2, 2}));
  for (std::size_t layer = 0; layer < 2; ++layer) {
    const auto& a = m.encoder_attention(layer);
    const std::size_t K = static_cast<std::size_t>(cfg.K);
    ASSERT_EQ(a.size() % K, 0u);
    for (std::size_t row = 0; row < a.size() / K; ++row) {
      double s = 0.0;
      for (std::size_t k = 0; k < K; ++k) s += a[row * K + k];
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
  gradient_check(m, b);
}

TEST(Baselines, IgnoreTilesAndDemographics) {
  const auto cfg = baseline_config();
  Rng rng(4);
  auto b = random_batch(cfg, 4, rng);
  for (const std::string kind : {"dlinear", "transformer"}) {
    auto m = model::make_classifier(kind, cfg);
    const auto before = m->forward(b, false);
    auto changed = b;
    for (auto& v : changed.demo.values()) v = rng.normal();
    for (auto& v : changed.images.values()) v = rng.uniform();
    EXPECT_EQ(m->forward(changed, false), before) << kind;
    changed.images = nn::Tensor();
    changed.image_index.clear();
    EXPECT_EQ(m->forward(changed, false), before) << kind;
  }
}

TEST(Checkpoint, RoundTripIsInferenceEquivalent) {
  Rng rng(5);
  auto cfg = testing::micro_model();
  const auto b = random_batch(cfg, 3, rng);
  testing::TempDir dir;
  for (const std::string kind : {"crashformer", "dlinear", "transformer"}) {
    auto m = model::make_classifier(kind, cfg);
    for (auto* p : m->parameters()) {
      for (auto& v : p->value.values()) v += 0.01 * rng.normal();
    }
    const auto path = dir / (kind + ".bin");
    model::save_checkpoint(*m, path);
    auto back = model::load_checkpoint(path);
    EXPECT_EQ(back->kind(), kind);
    EXPECT_EQ(back->config(), m->config());
    const auto pa = m->predict(b).probs, pb = back->predict(b).probs;
    for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_NEAR(pa[i], pb[i], 1e-6);
  }
  testing::write_file(dir / "junk.bin", "not a checkpoint");
  EXPECT_THROW(model::load_checkpoint(dir / "junk.bin"), ValidationError);
}

TEST(Arms, ProtocolShapes) {
  const auto sweep = arms_for(ExperimentKind::seq_sweep, 4, {4, 8, 12, 16});
  ASSERT_EQ(sweep.size(), 4u);
  EXPECT_EQ(sweep[3].name, "len16");
  EXPECT_EQ(sweep[3].K, 16);
  for (auto kind : {ExperimentKind::temporal, ExperimentKind::spatial}) {
    const auto arms = arms_for(kind, 4, {});
    ASSERT_EQ(arms.size(), 3u);
    EXPECT_EQ(arms[0].model_kind, "crashformer");
    EXPECT_EQ(arms[1].model_kind, "dlinear");
    EXPECT_EQ(arms[2].model_kind, "transformer");
  }
  EXPECT_THROW(arms_for(ExperimentKind::seq_sweep, 4, {}), ValidationError);
  EXPECT_THROW(parse_experiment_kind("bogus"), ValidationError);
  EXPECT_EQ(parse_experiment_kind("spatial"), ExperimentKind::spatial);
}

class ExperimentRun : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(6);
    inputs_ = testing::planted_city(dir_ / "tiles", rng, 5, 40);
    cfg_.model = testing::micro_model();
    cfg_.train.max_epochs = 2;
    cfg_.train.batch_size = 64;
    cfg_.seq_lengths = {4, 8};
  }
  ExperimentReport run(ExperimentKind kind, const std::string& sub) {
    cfg_.kind = kind;
    return run_experiment(cfg_, inputs_, dir_ / sub);
  }
  ::crashformer::testing::TempDir dir_;
  dataset::CityInputs inputs_;
  ExperimentConfig cfg_;
};

TEST_F(ExperimentRun, SeqSweepSharesTargetsAndRebuildsFromDumps) {
  const auto r = run(ExperimentKind::seq_sweep, "sweep");
  ASSERT_EQ(r.arms.size(), 2u);
  EXPECT_EQ(r.arms[0].spec.name, "len4");
  EXPECT_EQ(r.arms[1].spec.name, "len8");
  EXPECT_EQ(r.arms[0].metrics.n(), r.arms[1].metrics.n());
  EXPECT_EQ(testing::read_file(dir_ / "sweep/arms/len4/labels.u8"), testing::read_file(dir_ / "sweep/arms/len8/labels.u8"));
  EXPECT_EQ(fs::file_size(dir_ / "sweep/arms/len4/preds.f32"), r.arms[0].metrics.n() * 2 * 4);
  ASSERT_EQ(r.improvements.size(), 1u);
  EXPECT_EQ(r.improvements[0].reference, "len4");

  write_report(r, dir_ / "sweep", "sweep");
  const auto rebuilt = rebuild_report(dir_ / "sweep");
  EXPECT_EQ(render_csv(rebuilt), render_csv(r));
  EXPECT_EQ(render_improvements_csv(rebuilt), render_improvements_csv(r));

  const auto again = run(ExperimentKind::seq_sweep, "sweep2");
  EXPECT_EQ(render_csv(again), render_csv(r));
  EXPECT_EQ(again.provenance, r.provenance);
  EXPECT_EQ(testing::read_file(dir_ / "sweep/arms/len8/preds.f32"), testing::read_file(dir_ / "sweep2/arms/len8/preds.f32"));
}

TEST_F(ExperimentRun, SpatialArmsScoreHeldOutRegionsOnly) {
  cfg_.split.region_fraction = 0.6;
  const auto r = run(ExperimentKind::spatial, "spatial");
  ASSERT_EQ(r.arms.size(), 3u);
  // Two of five regions are held out; each has 40 - 4 targets.
  for (const auto& a : r.arms) EXPECT_EQ(a.metrics.n(), 2u * 36u) << a.spec.name;
  EXPECT_NE(r.provenance.find("\"spatial\""), std::string::npos);
}

}  // namespace
}  // namespace crashformer::eval
