#pragma once

#include <string>
#include <utility>
#include <vector>

#include "crashformer/random.hpp"
#include "crashformer/tensor.hpp"

// Layers cache what their backward pass needs from the most recent forward
// call, so each instance serves one forward/backward pair at a time.
namespace crashformer::nn {

/// y = x W^T + b over the last axis. W is (out x in).
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);
  void collect(ParamList& out) { out.push_back(&weight); out.push_back(&bias); }

  std::size_t in_features() const { return weight.value.dim(1); }
  std::size_t out_features() const { return weight.value.dim(0); }

  Param weight;
  Param bias;

 private:
  Tensor input_;
};

/// Exact (erf) GELU.
class Gelu {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;

 private:
  Tensor input_;
};

class Dropout {
 public:
  explicit Dropout(double p = 0.0) : p_(p) {}

  Tensor forward(const Tensor& x, bool training, Rng& rng);
  Tensor backward(const Tensor& dy) const;

 private:
  double p_;
  bool active_ = false;
  std::vector<double> mask_;
};

/// Normalizes over the last axis with a learned affine transform.
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(const std::string& name, std::size_t dim, double eps = 1e-5);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);
  void collect(ParamList& out) { out.push_back(&gamma); out.push_back(&beta); }

  Param gamma;
  Param beta;

 private:
  double eps_ = 1e-5;
  Tensor xhat_;
  std::vector<double> rstd_;
};

/// Centered moving average along axis 1 of a (B, L, d) tensor with
/// reflection padding (edge sample not repeated).
Tensor moving_average(const Tensor& x, int kernel);
/// Adjoint of moving_average, used for backpropagation.
Tensor moving_average_adjoint(const Tensor& dy, int kernel);

struct Decomposition {
  Tensor seasonal;
  Tensor trend;
};

/// seasonal = x - trend, trend = moving_average(x, kernel). Kernel must be odd.
Decomposition series_decompose(const Tensor& x, int kernel);

/// Frequency-enhanced block: real DFT along L, complex mixing of the lowest
/// `modes` bins with learned (d x d) weights, remaining bins zeroed, inverse
/// real DFT back to (B, L, d).
class FourierBlock {
 public:
  FourierBlock() = default;
  FourierBlock(const std::string& name, std::size_t d, std::size_t length, std::size_t modes, Rng& rng);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);
  void collect(ParamList& out) { out.push_back(&weight_re); out.push_back(&weight_im); }

  /// Sets every kept mode's weight to the identity (real part) and zero
  /// (imaginary part).
  void set_identity();
  std::size_t modes() const { return modes_; }

  Param weight_re;  // (modes, d, d)
  Param weight_im;

 private:
  std::size_t d_ = 0;
  std::size_t length_ = 0;
  std::size_t modes_ = 0;
  RowMatrix fwd_cos_;  // (modes, L)
  RowMatrix fwd_sin_;  // (modes, L), holds -sin
  RowMatrix inv_cos_;  // (L, modes)
  RowMatrix inv_sin_;  // (L, modes)
  std::vector<RowMatrix> x_re_;  // per mode (B, d)
  std::vector<RowMatrix> x_im_;
  std::size_t batch_ = 0;
};

/// 2-D convolution on NCHW input with stride, zero padding, dilation and
/// channel groups.
class Conv2d {
 public:
  struct Options {
    std::size_t kernel = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t dilation = 1;
    std::size_t groups = 1;
  };

  Conv2d() = default;
  Conv2d(const std::string& name, std::size_t in_channels, std::size_t out_channels, Options opts, Rng& rng);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);
  void collect(ParamList& out) { out.push_back(&weight); out.push_back(&bias); }

  /// Centered delta kernel (requires in == out channels per group), zero bias.
  void set_identity();
  std::pair<std::size_t, std::size_t> output_size(std::size_t h, std::size_t w) const;

  Param weight;  // (out, in / groups, k, k)
  Param bias;    // (out)

 private:
  std::size_t cin_ = 0;
  std::size_t cout_ = 0;
  Options opts_;
  Tensor input_;
};

/// LayerNorm over the channel axis of NCHW input, independently per pixel.
class ChannelNorm {
 public:
  ChannelNorm() = default;
  ChannelNorm(const std::string& name, std::size_t channels, double eps = 1e-5);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);
  void collect(ParamList& out) { out.push_back(&gamma); out.push_back(&beta); }

  Param gamma;
  Param beta;

 private:
  double eps_ = 1e-5;
  Tensor xhat_;
  std::vector<double> rstd_;
};

/// Single-head scaled dot-product attention with input/output projections.
class Attention {
 public:
  Attention() = default;
  Attention(const std::string& name, std::size_t d, Rng& rng);

  /// query (B, Lq, d), memory (B, Lk, d) -> (B, Lq, d)
  Tensor forward(const Tensor& query, const Tensor& memory);
  /// Returns gradients w.r.t. (query, memory).
  std::pair<Tensor, Tensor> backward(const Tensor& dy);
  void collect(ParamList& out);

  /// Attention weights of the last forward call, (B, Lq, Lk).
  const Tensor& weights() const { return attn_; }

 private:
  Linear wq_, wk_, wv_, wo_;
  std::size_t d_ = 0;
  Tensor q_, k_, v_, attn_;
};

/// Elementwise helpers.
Tensor add(const Tensor& a, const Tensor& b);
void add_inplace(Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

}  // namespace crashformer::nn
