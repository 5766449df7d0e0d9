#include <gtest/gtest.h>

#include "crashformer/error.hpp"
#include "crashformer/model.hpp"
#include "gradcheck.hpp"

namespace crashformer::model {
namespace {

using testing::check_entries;
using testing::dot;
using testing::kGradTol;
using testing::random_tensor;

ModelConfig tiny_config() {
  ModelConfig c;
  c.K = 4;
  c.d_model = 8;
  c.d_ff = 12;
  c.n_modes = 2;
  c.img_channels = {4, 6, 8};
  c.img_size = 16;
  c.demo_hidden = 10;
  c.clf_hidden = 12;
  c.dropout = 0.0;
  c.seed = 42;
  return c;
}

Batch random_batch(const ModelConfig& c, std::size_t B, std::size_t U, Rng& rng) {
  Batch b;
  b.history = random_tensor({B, static_cast<std::size_t>(c.K), 27}, rng);
  b.demo = random_tensor({B, 144}, rng);
  const auto S = static_cast<std::size_t>(c.img_size);
  b.images = Tensor({U, 3, S, S});
  for (auto& v : b.images.values()) v = rng.uniform();
  for (std::size_t i = 0; i < B; ++i) {
    b.image_index.push_back(i % U);
    b.labels.push_back(static_cast<std::uint8_t>(rng.below(2)));
  }
  return b;
}

TEST(ModelConfig, ValidatesInvariants) {
  ModelConfig c;
  EXPECT_NO_THROW(c.validate());
  c.n_modes = 4;
  EXPECT_THROW(c.validate(), ValidationError);
  c = ModelConfig{};
  c.decomp_kernel = 4;
  EXPECT_THROW(c.validate(), ValidationError);
  c = ModelConfig{};
  c.seq_out = 200;
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(ModelConfig, JsonRoundTripAndUnknownKeys) {
  ModelConfig c = tiny_config();
  c.use_img = false;
  EXPECT_EQ(model_config_from_json(to_json(c)), c);
  EXPECT_THROW(model_config_from_json(R"({"d_modle": 3})"), ValidationError);
}

TEST(CrashFormer, ShapeContract) {
  const auto cfg = tiny_config();
  CrashFormer m(cfg);
  Rng rng(1);
  const Batch b = random_batch(cfg, 3, 2, rng);
  const Tensor logits = m.forward(b, false);
  EXPECT_EQ(logits.shape(), (std::vector<std::size_t>{3, 2}));
  const auto& l = m.latents();
  EXPECT_EQ(l.seq.shape(), (std::vector<std::size_t>{3, 224}));
  EXPECT_EQ(l.img.shape(), (std::vector<std::size_t>{3, 128}));
  EXPECT_EQ(l.demo.shape(), (std::vector<std::size_t>{3, 28}));
  EXPECT_EQ(l.fused.shape(), (std::vector<std::size_t>{3, 380}));
  const Tensor p = m.predict(b).probs;
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_GE(p[2 * i], 0.0);
    EXPECT_NEAR(p[2 * i] + p[2 * i + 1], 1.0, 1e-12);
  }
}

TEST(CrashFormer, IdenticalRowsGiveIdenticalOutputs) {
  const auto cfg = tiny_config();
  CrashFormer m(cfg);
  Rng rng(2);
  Batch b = random_batch(cfg, 2, 1, rng);
  std::copy_n(b.history.data(), 4 * 27, b.history.data() + 4 * 27);
  std::copy_n(b.demo.data(), 144, b.demo.data() + 144);
  const Tensor z = m.forward(b, false);
  EXPECT_EQ(z[0], z[2]);
  EXPECT_EQ(z[1], z[3]);
  const auto& seq = m.latents().seq;
  for (std::size_t i = 0; i < 224; ++i) EXPECT_EQ(seq[i], seq[224 + i]);
}

TEST(CrashFormer, DeterministicForSeed) {
  const auto cfg = tiny_config();
  CrashFormer a(cfg), b(cfg);
  Rng rng(3);
  const Batch batch = random_batch(cfg, 4, 2, rng);
  EXPECT_EQ(a.forward(batch, false), b.forward(batch, false));
}

TEST(CrashFormer, AblationIgnoresDisabledInputs) {
  auto cfg = tiny_config();
  cfg.use_img = false;
  cfg.use_demo = false;
  CrashFormer m(cfg);
  Rng rng(4);
  Batch b1 = random_batch(cfg, 3, 2, rng);
  Batch b2 = b1;
  for (auto& v : b2.images.values()) v = rng.uniform();
  for (auto& v : b2.demo.values()) v = rng.normal();
  EXPECT_EQ(m.forward(b1, false), m.forward(b2, false));
  // The fused vector stays 380 wide with learned placeholders.
  EXPECT_EQ(m.latents().fused.dim(1), 380u);
}

TEST(CrashFormer, FourAblationArms) {
  Rng rng(5);
  for (bool img : {true, false}) {
    for (bool demo : {true, false}) {
      auto cfg = tiny_config();
      cfg.use_img = img;
      cfg.use_demo = demo;
      CrashFormer m(cfg);
      const Batch b = random_batch(cfg, 2, 2, rng);
      EXPECT_EQ(m.forward(b, false).shape(), (std::vector<std::size_t>{2, 2}));
    }
  }
}

TEST(Fuse, SlicesRecoverInputs) {
  Rng rng(6);
  const Tensor s = random_tensor({3, 224}, rng), i = random_tensor({3, 128}, rng), d = random_tensor({3, 28}, rng);
  const Tensor f = fuse(s, i, d);
  ASSERT_EQ(f.dim(1), 380u);
  for (std::size_t b = 0; b < 3; ++b) {
    EXPECT_EQ(f[b * 380 + 0], s[b * 224]);
    EXPECT_EQ(f[b * 380 + 224], i[b * 128]);
    EXPECT_EQ(f[b * 380 + 352], d[b * 28]);
    EXPECT_EQ(f[b * 380 + 379], d[b * 28 + 27]);
  }
  EXPECT_THROW(fuse(s, random_tensor({2, 128}, rng), d), ValidationError);
}

TEST(WeightedCe, ClosedForms) {
  Tensor z({1, 2});
  EXPECT_NEAR(weighted_ce(z, {1}, {1.0, 2.0}).loss, 2.0 * std::log(2.0), 1e-15);
  Tensor p({1, 2});
  p[1] = 1.0;
  EXPECT_EQ(weighted_ce_probs(p, {1}, {0.516, 15.327}), 0.0);
}

TEST(WeightedCe, MatchesScalarLoop) {
  Rng rng(7);
  const Tensor z = random_tensor({8, 2}, rng, 2.0);
  std::vector<std::uint8_t> y;
  for (int i = 0; i < 8; ++i) y.push_back(static_cast<std::uint8_t>(rng.below(2)));
  const dataset::ClassWeights w{0.516, 15.327};
  double expect = 0.0;
  for (std::size_t i = 0; i < 8; ++i) {
    const double e0 = std::exp(z[2 * i]), e1 = std::exp(z[2 * i + 1]);
    const double py = (y[i] ? e1 : e0) / (e0 + e1);
    expect += -(y[i] ? w.w1 : w.w0) * std::log(py);
  }
  expect /= 8.0;
  EXPECT_NEAR(weighted_ce(z, y, w).loss, expect, 1e-10);
  EXPECT_NEAR(weighted_ce_probs(nn::softmax_rows(z), y, w), expect, 1e-10);

  Tensor zz = z;
  const Tensor d = weighted_ce(z, y, w).dlogits;
  EXPECT_LT(check_entries(zz, d, [&] { return weighted_ce(zz, y, w).loss; }), kGradTol);
}

TEST(Softmax, ShiftInvariance) {
  Rng rng(8);
  Tensor z = random_tensor({5, 2}, rng);
  const Tensor p = nn::softmax_rows(z);
  for (auto& v : z.values()) v += 37.5;
  const Tensor q = nn::softmax_rows(z);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], q[i], 1e-6);
}

TEST(SeqEncoder, Gradients) {
  const auto cfg = tiny_config();
  Rng init(9);
  SeqEncoder enc(cfg, init);
  Rng rng(10);
  Tensor x = random_tensor({2, 4, 27}, rng);
  const Tensor r = random_tensor({2, 224}, rng);
  nn::ParamList params;
  enc.collect(params);
  for (auto* p : params) p->grad.zero();
  enc.forward(x, false, rng);
  const Tensor dx = enc.backward(r);
  const auto loss = [&] { return dot(enc.forward(x, false, rng), r); };
  EXPECT_LT(check_entries(x, dx, loss), kGradTol);
  for (auto* p : params) EXPECT_LT(check_entries(p->value, p->grad, loss), kGradTol) << p->name;
}

TEST(LargeKernelAttention, ZeroInputAndShape) {
  Rng rng(11);
  LargeKernelAttention lka("lka", 3, rng);
  const Tensor zero({1, 3, 9, 9});
  const Tensor y = lka.forward(zero);
  EXPECT_EQ(y.shape(), zero.shape());
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(LargeKernelAttention, IdentityConvsSquareTheInput) {
  Rng rng(12);
  LargeKernelAttention lka("lka", 1, rng);
  lka.set_identity();
  const Tensor x = random_tensor({1, 1, 9, 9}, rng);
  const Tensor y = lka.forward(x);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(y[i], x[i] * x[i]);
}

TEST(LargeKernelAttention, MatchesHandRolledConvolutions) {
  Rng rng(13);
  LargeKernelAttention lka("lka", 1, rng);
  const Tensor x = random_tensor({1, 1, 9, 9}, rng);
  const Tensor y = lka.forward(x);
  const auto conv = [](const std::vector<double>& in, const nn::Conv2d& c, int k, int pad, int dil) {
    std::vector<double> out(81);
    for (int i = 0; i < 9; ++i)
      for (int j = 0; j < 9; ++j) {
        double acc = c.bias.value[0];
        for (int u = 0; u < k; ++u)
          for (int v = 0; v < k; ++v) {
            const int a = i - pad + u * dil, b = j - pad + v * dil;
            if (a >= 0 && a < 9 && b >= 0 && b < 9) acc += c.weight.value[static_cast<std::size_t>(u * k + v)] * in[static_cast<std::size_t>(a * 9 + b)];
          }
        out[static_cast<std::size_t>(i * 9 + j)] = acc;
      }
    return out;
  };
  std::vector<double> in(x.values().begin(), x.values().end());
  auto a = conv(conv(in, lka.conv0, 5, 2, 1), lka.conv_spatial, 7, 9, 3);
  for (auto& v : a) v = v * lka.conv1.weight.value[0] + lka.conv1.bias.value[0];
  for (std::size_t i = 0; i < 81; ++i) EXPECT_NEAR(y[i], a[i] * in[i], 1e-12);
}

TEST(LargeKernelAttention, Gradients) {
  Rng rng(14);
  LargeKernelAttention lka("lka", 2, rng);
  Tensor x = random_tensor({1, 2, 9, 9}, rng);
  const Tensor r = random_tensor(x.shape(), rng);
  nn::ParamList params;
  lka.collect(params);
  lka.forward(x);
  const Tensor dx = lka.backward(r);
  const auto loss = [&] { return dot(lka.forward(x), r); };
  EXPECT_LT(check_entries(x, dx, loss), kGradTol);
  for (auto* p : params) EXPECT_LT(check_entries(p->value, p->grad, loss), kGradTol) << p->name;
}

TEST(ImageEncoder, ShapeDistinctInputsAndGradients) {
  const auto cfg = tiny_config();
  Rng init(15);
  ImageEncoder enc(cfg, init);
  Rng rng(16);
  Tensor flat({2, 3, 16, 16}, 0.5);
  for (std::size_t i = flat.size() / 2; i < flat.size(); ++i) flat[i] = 0.25;
  const Tensor y = enc.forward(flat);
  ASSERT_EQ(y.shape(), (std::vector<std::size_t>{2, 128}));
  bool differs = false;
  for (std::size_t i = 0; i < 128; ++i) differs |= y[i] != y[128 + i];
  EXPECT_TRUE(differs);

  Tensor x(flat.shape());
  for (auto& v : x.values()) v = rng.uniform();
  const Tensor r = random_tensor(y.shape(), rng);
  nn::ParamList params;
  enc.collect(params);
  enc.forward(x);
  const Tensor dx = enc.backward(r);
  const auto loss = [&] { return dot(enc.forward(x), r); };
  EXPECT_LT(check_entries(x, dx, loss), kGradTol);
  for (auto* p : params) EXPECT_LT(check_entries(p->value, p->grad, loss, 1e-3, 12), kGradTol) << p->name;
}

TEST(ImageEncoder, RejectsWrongTileShape) {
  Rng init(17);
  ImageEncoder enc(tiny_config(), init);
  EXPECT_THROW(enc.forward(Tensor({1, 3, 32, 32})), ValidationError);
}

TEST(DemoEncoder, ZeroWeightsAndGradients) {
  const auto cfg = tiny_config();
  Rng init(18);
  DemoEncoder enc(cfg, init);
  Rng rng(19);
  Tensor x = random_tensor({3, 144}, rng);
  const Tensor r = random_tensor({3, 28}, rng);
  nn::ParamList params;
  enc.collect(params);
  enc.forward(x);
  const Tensor dx = enc.backward(r);
  const auto loss = [&] { return dot(enc.forward(x), r); };
  EXPECT_LT(check_entries(x, dx, loss), kGradTol);
  for (auto* p : params) EXPECT_LT(check_entries(p->value, p->grad, loss), kGradTol) << p->name;

  for (auto* p : params) p->value.zero();
  const Tensor zero_out = enc.forward(x);
  for (double v : zero_out.values()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(enc.forward(Tensor({3, 143})), ValidationError);
}

TEST(CrashFormer, EndToEndGradients) {
  for (bool ablate : {false, true}) {
    auto cfg = tiny_config();
    cfg.use_img = !ablate;
    cfg.use_demo = !ablate;
    CrashFormer m(cfg);
    Rng rng(20);
    const Batch b = random_batch(cfg, 3, 2, rng);
    const dataset::ClassWeights w{0.516, 15.327};
    m.zero_grad();
    m.backward(weighted_ce(m.forward(b, false), b.labels, w).dlogits);
    const auto loss = [&] { return weighted_ce(m.forward(b, false), b.labels, w).loss; };
    for (auto* p : m.parameters()) {
      if (ablate && (p->name.rfind("img.", 0) == 0 || p->name.rfind("demo.", 0) == 0)) continue;
      EXPECT_LT(check_entries(p->value, p->grad, loss, 1e-3, 6), kGradTol) << p->name;
    }
  }
}

}  // namespace
}  // namespace crashformer::model
