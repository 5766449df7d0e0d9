#include <gtest/gtest.h>

#include <complex>
#include <numbers>

#include "crashformer/error.hpp"
#include "crashformer/layers.hpp"
#include "gradcheck.hpp"

namespace crashformer::nn {
namespace {

using testing::check_entries;
using testing::dot;
using testing::kGradEps;
using testing::kGradTol;
using testing::random_tensor;

// Reference convolution with explicit bounds checks.
Tensor conv_oracle(const Tensor& x, const Conv2d& conv, std::size_t k, std::size_t s, std::size_t p, std::size_t dil,
                   std::size_t groups) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = conv.weight.value.dim(0);
  const auto [OH, OW] = conv.output_size(H, W);
  const std::size_t cin_g = C / groups, cout_g = O / groups;
  Tensor y({B, O, OH, OW});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t i = 0; i < OH; ++i)
        for (std::size_t j = 0; j < OW; ++j) {
          double acc = conv.bias.value[o];
          for (std::size_t c = 0; c < cin_g; ++c)
            for (std::size_t u = 0; u < k; ++u)
              for (std::size_t v = 0; v < k; ++v) {
                const long ih = static_cast<long>(i * s + u * dil) - static_cast<long>(p);
                const long iw = static_cast<long>(j * s + v * dil) - static_cast<long>(p);
                if (ih < 0 || iw < 0 || ih >= static_cast<long>(H) || iw >= static_cast<long>(W)) continue;
                const std::size_t ic = (o / cout_g) * cin_g + c;
                acc += conv.weight.value[((o * cin_g + c) * k + u) * k + v] *
                       x[((b * C + ic) * H + static_cast<std::size_t>(ih)) * W + static_cast<std::size_t>(iw)];
              }
          y[((b * O + o) * OH + i) * OW + j] = acc;
        }
  return y;
}

TEST(Linear, MatchesDefinitionAndGradients) {
  Rng rng(1);
  Linear lin("l", 5, 3, rng);
  Tensor x = random_tensor({2, 4, 5}, rng);
  const Tensor y = lin.forward(x);
  ASSERT_EQ(y.shape(), (std::vector<std::size_t>{2, 4, 3}));
  double expect = lin.bias.value[1];
  for (std::size_t i = 0; i < 5; ++i) expect += lin.weight.value[5 + i] * x[5 + i];
  EXPECT_NEAR(y[4], expect, 1e-12);

  const Tensor r = random_tensor(y.shape(), rng);
  lin.weight.grad.zero();
  lin.bias.grad.zero();
  const Tensor dx = lin.backward(r);
  const auto loss = [&] { return dot(lin.forward(x), r); };
  EXPECT_LT(check_entries(x, dx, loss), kGradTol);
  EXPECT_LT(check_entries(lin.weight.value, lin.weight.grad, loss), kGradTol);
  EXPECT_LT(check_entries(lin.bias.value, lin.bias.grad, loss), kGradTol);
}

TEST(Gelu, KnownValuesAndGradient) {
  Gelu g;
  Tensor x({3});
  x[0] = 0.0;
  x[1] = 1.0;
  x[2] = -1.0;
  const Tensor y = g.forward(x);
  EXPECT_DOUBLE_EQ(y[0], 0.0);
  EXPECT_NEAR(y[1], 0.8413447460685429, 1e-12);
  EXPECT_NEAR(y[2], -0.15865525393145707, 1e-12);
  Rng rng(2);
  Tensor z = random_tensor({10}, rng);
  const Tensor r = random_tensor({10}, rng);
  g.forward(z);
  const Tensor dz = g.backward(r);
  EXPECT_LT(check_entries(z, dz, [&] { return dot(g.forward(z), r); }), kGradTol);
}

TEST(Dropout, InferenceIsIdentityTrainingKeepsExpectation) {
  Rng rng(3);
  Dropout d(0.5);
  Tensor x({10000}, 1.0);
  EXPECT_EQ(d.forward(x, false, rng), x);
  const Tensor y = d.forward(x, true, rng);
  double mean = 0.0;
  for (double v : y.values()) {
    EXPECT_TRUE(v == 0.0 || v == 2.0);
    mean += v;
  }
  EXPECT_NEAR(mean / 10000.0, 1.0, 0.05);
  const Tensor g = d.backward(x);
  EXPECT_EQ(g, y);
}

TEST(LayerNorm, Gradients) {
  Rng rng(4);
  LayerNorm ln("ln", 6);
  for (auto& v : ln.gamma.value.values()) v = 1.0 + 0.3 * rng.normal();
  for (auto& v : ln.beta.value.values()) v = 0.3 * rng.normal();
  Tensor x = random_tensor({3, 6}, rng);
  const Tensor r = random_tensor({3, 6}, rng);
  ln.forward(x);
  const Tensor dx = ln.backward(r);
  const auto loss = [&] { return dot(ln.forward(x), r); };
  EXPECT_LT(check_entries(x, dx, loss), kGradTol);
  EXPECT_LT(check_entries(ln.gamma.value, ln.gamma.grad, loss), kGradTol);
  EXPECT_LT(check_entries(ln.beta.value, ln.beta.grad, loss), kGradTol);
}

TEST(SeriesDecompose, HandComputedMovingAverage) {
  Tensor x({1, 4, 1});
  for (int i = 0; i < 4; ++i) x[static_cast<std::size_t>(i)] = i + 1;
  const auto d = series_decompose(x, 3);
  // Reflection pads [1,2,3,4] to [2,1,2,3,4,3].
  const double expect[] = {5.0 / 3.0, 2.0, 3.0, 10.0 / 3.0};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(d.trend[i], expect[i], 1e-15);
    EXPECT_NEAR(d.seasonal[i] + d.trend[i], x[i], 1e-15);
  }
}

TEST(SeriesDecompose, ConstantAndIdentityKernel) {
  Tensor c({2, 5, 3}, 4.25);
  const auto d = series_decompose(c, 5);
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_DOUBLE_EQ(d.trend[i], 4.25);
    EXPECT_DOUBLE_EQ(d.seasonal[i], 0.0);
  }
  Rng rng(5);
  const Tensor x = random_tensor({2, 4, 3}, rng);
  EXPECT_EQ(series_decompose(x, 1).trend, x);
}

TEST(SeriesDecompose, RejectsEvenOrOversizedKernel) {
  const Tensor x({1, 4, 1});
  EXPECT_THROW(series_decompose(x, 2), ValidationError);
  EXPECT_THROW(series_decompose(x, 9), ValidationError);
}

TEST(SeriesDecompose, AdjointIdentity) {
  Rng rng(6);
  const Tensor x = random_tensor({2, 7, 3}, rng);
  const Tensor y = random_tensor({2, 7, 3}, rng);
  EXPECT_NEAR(dot(moving_average(x, 5), y), dot(x, moving_average_adjoint(y, 5)), 1e-12);
}

TEST(FourierBlock, IdentityWeightsRoundTrip) {
  Rng rng(7);
  for (std::size_t L : {4u, 5u, 8u}) {
    FourierBlock feb("f", 3, L, L / 2 + 1, rng);
    feb.set_identity();
    const Tensor x = random_tensor({2, L, 3}, rng);
    const Tensor y = feb.forward(x);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], x[i], 1e-5);
  }
}

TEST(FourierBlock, ZeroWeightsGiveZero) {
  Rng rng(8);
  FourierBlock feb("f", 2, 6, 3, rng);
  feb.weight_re.value.zero();
  feb.weight_im.value.zero();
  const Tensor y = feb.forward(random_tensor({2, 6, 2}, rng));
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(FourierBlock, RejectsTooManyModes) {
  Rng rng(9);
  EXPECT_THROW(FourierBlock("f", 2, 4, 4, rng), ValidationError);
  EXPECT_THROW(FourierBlock("f", 2, 4, 0, rng), ValidationError);
}

TEST(FourierBlock, MatchesNaiveDft) {
  Rng rng(10);
  const std::size_t L = 4;
  FourierBlock feb("f", 1, L, 3, rng);
  Tensor x({1, L, 1});
  x[0] = 1.0;
  const Tensor y = feb.forward(x);

  using cd = std::complex<double>;
  std::vector<cd> X(L), Y(L);
  for (std::size_t k = 0; k < L; ++k)
    for (std::size_t t = 0; t < L; ++t)
      X[k] += x[t] * std::polar(1.0, -2.0 * std::numbers::pi * double(k * t) / double(L));
  for (std::size_t k = 0; k < 3; ++k) Y[k] = X[k] * cd(feb.weight_re.value[k], feb.weight_im.value[k]);
  Y[3] = std::conj(Y[1]);
  for (std::size_t t = 0; t < L; ++t) {
    cd acc = 0.0;
    for (std::size_t k = 0; k < L; ++k) acc += Y[k] * std::polar(1.0, 2.0 * std::numbers::pi * double(k * t) / double(L));
    EXPECT_NEAR(y[t], acc.real() / double(L), 1e-12);
  }
}

TEST(FourierBlock, Gradients) {
  Rng rng(11);
  FourierBlock feb("f", 3, 6, 3, rng);
  for (auto& v : feb.weight_re.value.values()) v = rng.normal();
  for (auto& v : feb.weight_im.value.values()) v = rng.normal();
  Tensor x = random_tensor({2, 6, 3}, rng);
  const Tensor r = random_tensor({2, 6, 3}, rng);
  feb.forward(x);
  const Tensor dx = feb.backward(r);
  const auto loss = [&] { return dot(feb.forward(x), r); };
  EXPECT_LT(check_entries(x, dx, loss), kGradTol);
  EXPECT_LT(check_entries(feb.weight_re.value, feb.weight_re.grad, loss), kGradTol);
  EXPECT_LT(check_entries(feb.weight_im.value, feb.weight_im.grad, loss), kGradTol);
}

struct ConvCase {
  std::size_t cin, cout, k, s, p, dil, groups, size;
};

class ConvTest : public ::testing::TestWithParam<ConvCase> {};

TEST_P(ConvTest, MatchesOracleAndGradients) {
  const auto c = GetParam();
  Rng rng(12);
  Conv2d conv("c", c.cin, c.cout, Conv2d::Options{c.k, c.s, c.p, c.dil, c.groups}, rng);
  Tensor x = random_tensor({2, c.cin, c.size, c.size}, rng);
  const Tensor y = conv.forward(x);
  const Tensor ref = conv_oracle(x, conv, c.k, c.s, c.p, c.dil, c.groups);
  ASSERT_EQ(y.shape(), ref.shape());
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);

  const Tensor r = random_tensor(y.shape(), rng);
  const Tensor dx = conv.backward(r);
  const auto loss = [&] { return dot(conv.forward(x), r); };
  EXPECT_LT(check_entries(x, dx, loss), kGradTol);
  EXPECT_LT(check_entries(conv.weight.value, conv.weight.grad, loss), kGradTol);
  EXPECT_LT(check_entries(conv.bias.value, conv.bias.grad, loss), kGradTol);
}

INSTANTIATE_TEST_SUITE_P(Geometries, ConvTest,
                         ::testing::Values(ConvCase{3, 4, 7, 4, 3, 1, 1, 16}, ConvCase{4, 6, 3, 2, 1, 1, 1, 9},
                                           ConvCase{4, 4, 5, 1, 2, 1, 4, 7}, ConvCase{3, 3, 7, 1, 9, 3, 3, 9},
                                           ConvCase{5, 3, 1, 1, 0, 1, 1, 6}, ConvCase{4, 6, 3, 1, 1, 2, 2, 8}));

TEST(Conv2d, IdentityInitIsIdentity) {
  Rng rng(13);
  Conv2d conv("c", 3, 3, Conv2d::Options{7, 1, 9, 3, 3}, rng);
  conv.set_identity();
  const Tensor x = random_tensor({1, 3, 9, 9}, rng);
  EXPECT_EQ(conv.forward(x), x);
}

TEST(ChannelNorm, NormalizesPerPixelAndGradients) {
  Rng rng(14);
  ChannelNorm cn("cn", 4);
  Tensor x = random_tensor({2, 4, 3, 3}, rng, 3.0);
  const Tensor y = cn.forward(x);
  for (std::size_t p = 0; p < 9; ++p) {
    double m = 0.0;
    for (std::size_t c = 0; c < 4; ++c) m += y[c * 9 + p];
    EXPECT_NEAR(m, 0.0, 1e-12);
  }
  for (auto& v : cn.gamma.value.values()) v = 1.0 + 0.2 * rng.normal();
  const Tensor r = random_tensor(y.shape(), rng);
  cn.forward(x);
  const Tensor dx = cn.backward(r);
  const auto loss = [&] { return dot(cn.forward(x), r); };
  EXPECT_LT(check_entries(x, dx, loss), kGradTol);
  EXPECT_LT(check_entries(cn.gamma.value, cn.gamma.grad, loss), kGradTol);
  EXPECT_LT(check_entries(cn.beta.value, cn.beta.grad, loss), kGradTol);
}

TEST(Attention, RowsSumToOneAndGradients) {
  Rng rng(15);
  Attention att("a", 4, rng);
  Tensor q = random_tensor({2, 3, 4}, rng);
  Tensor m = random_tensor({2, 5, 4}, rng);
  const Tensor y = att.forward(q, m);
  const Tensor& A = att.weights();
  for (std::size_t row = 0; row < 6; ++row) {
    double s = 0.0;
    for (std::size_t j = 0; j < 5; ++j) s += A[row * 5 + j];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  const Tensor r = random_tensor(y.shape(), rng);
  ParamList params;
  att.collect(params);
  const auto [dq, dm] = att.backward(r);
  const auto loss = [&] { return dot(att.forward(q, m), r); };
  EXPECT_LT(check_entries(q, dq, loss), kGradTol);
  EXPECT_LT(check_entries(m, dm, loss), kGradTol);
  for (auto* p : params) EXPECT_LT(check_entries(p->value, p->grad, loss), kGradTol) << p->name;
}

TEST(Softmax, KnownValues) {
  Tensor z({2, 2});
  z[0] = 2.0;
  z[1] = 0.0;
  z[2] = 100.0;
  z[3] = 100.0;
  const Tensor p = softmax_rows(z);
  EXPECT_NEAR(p[0], 0.8808, 5e-5);
  EXPECT_NEAR(p[1], 0.1192, 5e-5);
  EXPECT_DOUBLE_EQ(p[2], 0.5);
  EXPECT_DOUBLE_EQ(p[3], 0.5);
}

}  // namespace
}  // namespace crashformer::nn
