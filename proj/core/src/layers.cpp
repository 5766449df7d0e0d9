#include "crashformer/layers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "crashformer/error.hpp"

namespace crashformer::nn {

namespace {

void fill_uniform(Tensor& t, double bound, Rng& rng) {
  for (auto& v : t.values()) v = rng.uniform(-bound, bound);
}

std::vector<std::size_t> with_last(std::vector<std::size_t> shape, std::size_t last) {
  shape.back() = last;
  return shape;
}

// Range of output columns whose input column o*stride + offset lies in [0, n).
std::pair<std::ptrdiff_t, std::ptrdiff_t> valid_range(std::ptrdiff_t offset, std::ptrdiff_t stride, std::ptrdiff_t n,
                                                      std::ptrdiff_t out_n) {
  std::ptrdiff_t lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  std::ptrdiff_t hi = (n - 1 - offset) >= 0 ? (n - 1 - offset) / stride + 1 : 0;
  return {std::min(lo, out_n), std::clamp<std::ptrdiff_t>(hi, 0, out_n)};
}

}  // namespace

// ---------------------------------------------------------------- Linear

Linear::Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng)
    : weight(name + ".weight", {out, in}), bias(name + ".bias", {out}) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  fill_uniform(weight.value, bound, rng);
  fill_uniform(bias.value, bound, rng);
}

Tensor Linear::forward(const Tensor& x) {
  if (x.rank() == 0 || x.shape().back() != in_features()) {
    throw ValidationError(weight.name + ": input " + shape_str(x.shape()) + " does not end in " +
                          std::to_string(in_features()));
  }
  input_ = x;
  Tensor y(with_last(x.shape(), out_features()));
  auto Y = y.rows();
  Y.noalias() = x.rows() * weight.value.rows().transpose();
  Y.rowwise() += bias.value.matrix(1, out_features()).row(0);
  return y;
}

Tensor Linear::backward(const Tensor& dy) {
  const auto dY = dy.rows();
  const auto X = input_.rows();
  weight.grad.rows().noalias() += dY.transpose() * X;
  bias.grad.matrix(1, out_features()).row(0) += dY.colwise().sum();
  Tensor dx(input_.shape());
  dx.rows().noalias() = dY * weight.value.rows();
  return dx;
}

// ---------------------------------------------------------------- GELU

Tensor Gelu::forward(const Tensor& x) {
  input_ = x;
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * std::numbers::sqrt2 / 2.0));
  }
  return y;
}

Tensor Gelu::backward(const Tensor& dy) const {
  Tensor dx(dy.shape());
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  for (std::size_t i = 0; i < dy.size(); ++i) {
    const double x = input_[i];
    const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
    const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
    dx[i] = dy[i] * (cdf + x * pdf);
  }
  return dx;
}

// ---------------------------------------------------------------- Dropout

Tensor Dropout::forward(const Tensor& x, bool training, Rng& rng) {
  active_ = training && p_ > 0.0;
  if (!active_) return x;
  mask_.resize(x.size());
  Tensor y(x.shape());
  const double keep = 1.0 / (1.0 - p_);
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask_[i] = rng.uniform() < p_ ? 0.0 : keep;
    y[i] = x[i] * mask_[i];
  }
  return y;
}

Tensor Dropout::backward(const Tensor& dy) const {
  if (!active_) return dy;
  Tensor dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * mask_[i];
  return dx;
}

// ---------------------------------------------------------------- LayerNorm

LayerNorm::LayerNorm(const std::string& name, std::size_t dim, double eps)
    : gamma(name + ".gamma", {dim}), beta(name + ".beta", {dim}), eps_(eps) {
  gamma.value.fill(1.0);
}

Tensor LayerNorm::forward(const Tensor& x) {
  const std::size_t D = gamma.value.size();
  if (x.rank() == 0 || x.shape().back() != D) throw ValidationError(gamma.name + ": width mismatch");
  xhat_ = Tensor(x.shape());
  Tensor y(x.shape());
  const std::size_t n = x.size() / D;
  rstd_.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double* in = x.data() + r * D;
    double mean = 0.0;
    for (std::size_t i = 0; i < D; ++i) mean += in[i];
    mean /= static_cast<double>(D);
    double var = 0.0;
    for (std::size_t i = 0; i < D; ++i) var += (in[i] - mean) * (in[i] - mean);
    var /= static_cast<double>(D);
    const double rstd = 1.0 / std::sqrt(var + eps_);
    rstd_[r] = rstd;
    for (std::size_t i = 0; i < D; ++i) {
      const double h = (in[i] - mean) * rstd;
      xhat_[r * D + i] = h;
      y[r * D + i] = h * gamma.value[i] + beta.value[i];
    }
  }
  return y;
}

Tensor LayerNorm::backward(const Tensor& dy) {
  const std::size_t D = gamma.value.size();
  const std::size_t n = dy.size() / D;
  Tensor dx(dy.shape());
  std::vector<double> dxhat(D);
  for (std::size_t r = 0; r < n; ++r) {
    double sum = 0.0;
    double dot = 0.0;
    for (std::size_t i = 0; i < D; ++i) {
      const double g = dy[r * D + i];
      const double h = xhat_[r * D + i];
      gamma.grad[i] += g * h;
      beta.grad[i] += g;
      dxhat[i] = g * gamma.value[i];
      sum += dxhat[i];
      dot += dxhat[i] * h;
    }
    const double scale = rstd_[r] / static_cast<double>(D);
    for (std::size_t i = 0; i < D; ++i) {
      dx[r * D + i] = scale * (static_cast<double>(D) * dxhat[i] - sum - xhat_[r * D + i] * dot);
    }
  }
  return dx;
}

// ---------------------------------------------------------------- series decomposition

namespace {

void check_kernel(const Tensor& x, int kernel) {
  if (x.rank() != 3) throw ValidationError("series_decompose expects (B, L, d), got " + shape_str(x.shape()));
  if (kernel < 1 || kernel % 2 == 0) throw ValidationError("moving-average kernel must be odd, got " + std::to_string(kernel));
  const auto pad = static_cast<std::size_t>(kernel / 2);
  if (pad > 0 && pad > x.dim(1) - 1) {
    throw ValidationError("moving-average kernel " + std::to_string(kernel) + " too wide for length " +
                          std::to_string(x.dim(1)));
  }
}

std::ptrdiff_t reflect(std::ptrdiff_t i, std::ptrdiff_t n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * (n - 1) - i;
  return i;
}

}  // namespace

Tensor moving_average(const Tensor& x, int kernel) {
  check_kernel(x, kernel);
  const std::size_t B = x.dim(0), L = x.dim(1), D = x.dim(2);
  const std::ptrdiff_t pad = kernel / 2;
  Tensor out(x.shape());
  const double inv = 1.0 / kernel;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < L; ++t) {
      double* dst = out.data() + (b * L + t) * D;
      for (std::ptrdiff_t j = -pad; j <= pad; ++j) {
        const auto s = static_cast<std::size_t>(reflect(static_cast<std::ptrdiff_t>(t) + j, static_cast<std::ptrdiff_t>(L)));
        const double* src = x.data() + (b * L + s) * D;
        for (std::size_t i = 0; i < D; ++i) dst[i] += src[i];
      }
      for (std::size_t i = 0; i < D; ++i) dst[i] *= inv;
    }
  }
  return out;
}

Tensor moving_average_adjoint(const Tensor& dy, int kernel) {
  check_kernel(dy, kernel);
  const std::size_t B = dy.dim(0), L = dy.dim(1), D = dy.dim(2);
  const std::ptrdiff_t pad = kernel / 2;
  Tensor dx(dy.shape());
  const double inv = 1.0 / kernel;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < L; ++t) {
      const double* src = dy.data() + (b * L + t) * D;
      for (std::ptrdiff_t j = -pad; j <= pad; ++j) {
        const auto s = static_cast<std::size_t>(reflect(static_cast<std::ptrdiff_t>(t) + j, static_cast<std::ptrdiff_t>(L)));
        double* dst = dx.data() + (b * L + s) * D;
        for (std::size_t i = 0; i < D; ++i) dst[i] += src[i] * inv;
      }
    }
  }
  return dx;
}

Decomposition series_decompose(const Tensor& x, int kernel) {
  Decomposition d;
  d.trend = moving_average(x, kernel);
  d.seasonal = sub(x, d.trend);
  return d;
}

// ---------------------------------------------------------------- Fourier block

FourierBlock::FourierBlock(const std::string& name, std::size_t d, std::size_t length, std::size_t modes, Rng& rng)
    : weight_re(name + ".weight_re", {modes, d, d}),
      weight_im(name + ".weight_im", {modes, d, d}),
      d_(d),
      length_(length),
      modes_(modes) {
  if (modes == 0 || modes > length / 2 + 1) {
    throw ValidationError("Fourier modes " + std::to_string(modes) + " out of range for length " +
                          std::to_string(length) + " (max " + std::to_string(length / 2 + 1) + ")");
  }
  const double bound = 1.0 / static_cast<double>(d);
  fill_uniform(weight_re.value, bound, rng);
  fill_uniform(weight_im.value, bound, rng);

  fwd_cos_.resize(static_cast<Eigen::Index>(modes), static_cast<Eigen::Index>(length));
  fwd_sin_.resizeLike(fwd_cos_);
  inv_cos_.resize(static_cast<Eigen::Index>(length), static_cast<Eigen::Index>(modes));
  inv_sin_.resizeLike(inv_cos_);
  const double L = static_cast<double>(length);
  for (std::size_t k = 0; k < modes; ++k) {
    const bool self_conjugate = k == 0 || (length % 2 == 0 && k == length / 2);
    const double a = self_conjugate ? 1.0 : 2.0;
    for (std::size_t t = 0; t < length; ++t) {
      // Reduce k*t mod L before scaling keeps the angles exact for integer grids.
      const double theta = 2.0 * std::numbers::pi * static_cast<double>((k * t) % length) / L;
      const auto ki = static_cast<Eigen::Index>(k);
      const auto ti = static_cast<Eigen::Index>(t);
      fwd_cos_(ki, ti) = std::cos(theta);
      fwd_sin_(ki, ti) = -std::sin(theta);
      inv_cos_(ti, ki) = a * std::cos(theta) / L;
      inv_sin_(ti, ki) = -a * std::sin(theta) / L;
    }
  }
}

void FourierBlock::set_identity() {
  weight_re.value.zero();
  weight_im.value.zero();
  for (std::size_t k = 0; k < modes_; ++k) {
    for (std::size_t i = 0; i < d_; ++i) weight_re.value[(k * d_ + i) * d_ + i] = 1.0;
  }
}

Tensor FourierBlock::forward(const Tensor& x) {
  expect_shape(x, {0, length_, d_}, "FourierBlock");
  batch_ = x.dim(0);
  const auto B = static_cast<Eigen::Index>(batch_);
  const auto D = static_cast<Eigen::Index>(d_);
  const auto M = static_cast<Eigen::Index>(modes_);
  x_re_.assign(modes_, RowMatrix(B, D));
  x_im_.assign(modes_, RowMatrix(B, D));
  for (Eigen::Index b = 0; b < B; ++b) {
    ConstMatMap xb(x.data() + b * length_ * d_, static_cast<Eigen::Index>(length_), D);
    const RowMatrix re = fwd_cos_ * xb;
    const RowMatrix im = fwd_sin_ * xb;
    for (Eigen::Index k = 0; k < M; ++k) {
      x_re_[k].row(b) = re.row(k);
      x_im_[k].row(b) = im.row(k);
    }
  }
  std::vector<RowMatrix> y_re(modes_), y_im(modes_);
  for (std::size_t k = 0; k < modes_; ++k) {
    ConstMatMap wr(weight_re.value.data() + k * d_ * d_, D, D);
    ConstMatMap wi(weight_im.value.data() + k * d_ * d_, D, D);
    y_re[k] = x_re_[k] * wr - x_im_[k] * wi;
    y_im[k] = x_re_[k] * wi + x_im_[k] * wr;
  }
  Tensor y(x.shape());
  RowMatrix yr(M, D), yi(M, D);
  for (Eigen::Index b = 0; b < B; ++b) {
    for (Eigen::Index k = 0; k < M; ++k) {
      yr.row(k) = y_re[k].row(b);
      yi.row(k) = y_im[k].row(b);
    }
    MatMap yb(y.data() + b * length_ * d_, static_cast<Eigen::Index>(length_), D);
    yb.noalias() = inv_cos_ * yr + inv_sin_ * yi;
  }
  return y;
}

Tensor FourierBlock::backward(const Tensor& dy) {
  const auto B = static_cast<Eigen::Index>(batch_);
  const auto D = static_cast<Eigen::Index>(d_);
  const auto M = static_cast<Eigen::Index>(modes_);
  std::vector<RowMatrix> dy_re(modes_, RowMatrix(B, D)), dy_im(modes_, RowMatrix(B, D));
  for (Eigen::Index b = 0; b < B; ++b) {
    ConstMatMap g(dy.data() + b * length_ * d_, static_cast<Eigen::Index>(length_), D);
    const RowMatrix re = inv_cos_.transpose() * g;
    const RowMatrix im = inv_sin_.transpose() * g;
    for (Eigen::Index k = 0; k < M; ++k) {
      dy_re[k].row(b) = re.row(k);
      dy_im[k].row(b) = im.row(k);
    }
  }
  std::vector<RowMatrix> dx_re(modes_), dx_im(modes_);
  for (std::size_t k = 0; k < modes_; ++k) {
    ConstMatMap wr(weight_re.value.data() + k * d_ * d_, D, D);
    ConstMatMap wi(weight_im.value.data() + k * d_ * d_, D, D);
    MatMap gwr(weight_re.grad.data() + k * d_ * d_, D, D);
    MatMap gwi(weight_im.grad.data() + k * d_ * d_, D, D);
    gwr.noalias() += x_re_[k].transpose() * dy_re[k] + x_im_[k].transpose() * dy_im[k];
    gwi.noalias() += x_re_[k].transpose() * dy_im[k] - x_im_[k].transpose() * dy_re[k];
    dx_re[k] = dy_re[k] * wr.transpose() + dy_im[k] * wi.transpose();
    dx_im[k] = dy_im[k] * wr.transpose() - dy_re[k] * wi.transpose();
  }
  Tensor dx(dy.shape());
  RowMatrix xr(M, D), xi(M, D);
  for (Eigen::Index b = 0; b < B; ++b) {
    for (Eigen::Index k = 0; k < M; ++k) {
      xr.row(k) = dx_re[k].row(b);
      xi.row(k) = dx_im[k].row(b);
    }
    MatMap db(dx.data() + b * length_ * d_, static_cast<Eigen::Index>(length_), D);
    db.noalias() = fwd_cos_.transpose() * xr + fwd_sin_.transpose() * xi;
  }
  return dx;
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(const std::string& name, std::size_t in_channels, std::size_t out_channels, Options opts, Rng& rng)
    : weight(name + ".weight", {out_channels, in_channels / std::max<std::size_t>(opts.groups, 1), opts.kernel, opts.kernel}),
      bias(name + ".bias", {out_channels}),
      cin_(in_channels),
      cout_(out_channels),
      opts_(opts) {
  if (opts.groups == 0 || in_channels % opts.groups || out_channels % opts.groups || opts.kernel == 0 ||
      opts.stride == 0 || opts.dilation == 0) {
    throw ValidationError(name + ": invalid convolution geometry");
  }
  const double fan_in = static_cast<double>(in_channels / opts.groups * opts.kernel * opts.kernel);
  const double bound = 1.0 / std::sqrt(fan_in);
  fill_uniform(weight.value, bound, rng);
  fill_uniform(bias.value, bound, rng);
}

void Conv2d::set_identity() {
  const std::size_t cin_g = cin_ / opts_.groups;
  const std::size_t cout_g = cout_ / opts_.groups;
  if (cin_g != cout_g) throw ValidationError(weight.name + ": identity needs equal in/out channels per group");
  weight.value.zero();
  bias.value.zero();
  const std::size_t k = opts_.kernel;
  for (std::size_t oc = 0; oc < cout_; ++oc) {
    weight.value[((oc * cin_g + oc % cout_g) * k + k / 2) * k + k / 2] = 1.0;
  }
}

std::pair<std::size_t, std::size_t> Conv2d::output_size(std::size_t h, std::size_t w) const {
  const std::ptrdiff_t span = static_cast<std::ptrdiff_t>(opts_.dilation * (opts_.kernel - 1) + 1);
  const auto out = [&](std::size_t n) -> std::size_t {
    const std::ptrdiff_t v = static_cast<std::ptrdiff_t>(n + 2 * opts_.padding) - span;
    if (v < 0) throw ValidationError(weight.name + ": input smaller than the receptive field");
    return static_cast<std::size_t>(v) / opts_.stride + 1;
  };
  return {out(h), out(w)};
}

Tensor Conv2d::forward(const Tensor& x) {
  expect_shape(x, {0, cin_, 0, 0}, weight.name.c_str());
  input_ = x;
  const std::size_t B = x.dim(0), H = x.dim(2), W = x.dim(3);
  const auto [OH, OW] = output_size(H, W);
  Tensor y({B, cout_, OH, OW});
  const auto& o = opts_;
  if (o.kernel == 1 && o.stride == 1 && o.padding == 0 && o.groups == 1) {
    ConstMatMap w(weight.value.data(), static_cast<Eigen::Index>(cout_), static_cast<Eigen::Index>(cin_));
    const auto HW = static_cast<Eigen::Index>(H * W);
    for (std::size_t b = 0; b < B; ++b) {
      ConstMatMap xb(x.data() + b * cin_ * H * W, static_cast<Eigen::Index>(cin_), HW);
      MatMap yb(y.data() + b * cout_ * H * W, static_cast<Eigen::Index>(cout_), HW);
      yb.noalias() = w * xb;
      for (std::size_t c = 0; c < cout_; ++c) yb.row(static_cast<Eigen::Index>(c)).array() += bias.value[c];
    }
    return y;
  }
  const std::size_t cin_g = cin_ / o.groups, cout_g = cout_ / o.groups, K = o.kernel;
  const auto S = static_cast<std::ptrdiff_t>(o.stride);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t oc = 0; oc < cout_; ++oc) {
      double* out = y.data() + (b * cout_ + oc) * OH * OW;
      std::fill(out, out + OH * OW, bias.value[oc]);
      const std::size_t g = oc / cout_g;
      for (std::size_t icl = 0; icl < cin_g; ++icl) {
        const double* in = x.data() + (b * cin_ + g * cin_g + icl) * H * W;
        for (std::size_t kh = 0; kh < K; ++kh) {
          const auto off_h = static_cast<std::ptrdiff_t>(kh * o.dilation) - static_cast<std::ptrdiff_t>(o.padding);
          const auto [h0, h1] = valid_range(off_h, S, static_cast<std::ptrdiff_t>(H), static_cast<std::ptrdiff_t>(OH));
          for (std::size_t kw = 0; kw < K; ++kw) {
            const double wv = weight.value[((oc * cin_g + icl) * K + kh) * K + kw];
            const auto off_w = static_cast<std::ptrdiff_t>(kw * o.dilation) - static_cast<std::ptrdiff_t>(o.padding);
            const auto [w0, w1] = valid_range(off_w, S, static_cast<std::ptrdiff_t>(W), static_cast<std::ptrdiff_t>(OW));
            for (std::ptrdiff_t oh = h0; oh < h1; ++oh) {
              const double* row = in + (oh * S + off_h) * static_cast<std::ptrdiff_t>(W);
              double* orow = out + oh * static_cast<std::ptrdiff_t>(OW);
              for (std::ptrdiff_t ow = w0; ow < w1; ++ow) orow[ow] += wv * row[ow * S + off_w];
            }
          }
        }
      }
    }
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
  const Tensor& x = input_;
  const std::size_t B = x.dim(0), H = x.dim(2), W = x.dim(3);
  const std::size_t OH = dy.dim(2), OW = dy.dim(3);
  Tensor dx(x.shape());
  const auto& o = opts_;
  if (o.kernel == 1 && o.stride == 1 && o.padding == 0 && o.groups == 1) {
    ConstMatMap w(weight.value.data(), static_cast<Eigen::Index>(cout_), static_cast<Eigen::Index>(cin_));
    MatMap gw(weight.grad.data(), static_cast<Eigen::Index>(cout_), static_cast<Eigen::Index>(cin_));
    const auto HW = static_cast<Eigen::Index>(H * W);
    for (std::size_t b = 0; b < B; ++b) {
      ConstMatMap xb(x.data() + b * cin_ * H * W, static_cast<Eigen::Index>(cin_), HW);
      ConstMatMap gb(dy.data() + b * cout_ * H * W, static_cast<Eigen::Index>(cout_), HW);
      MatMap dxb(dx.data() + b * cin_ * H * W, static_cast<Eigen::Index>(cin_), HW);
      gw.noalias() += gb * xb.transpose();
      dxb.noalias() = w.transpose() * gb;
      for (std::size_t c = 0; c < cout_; ++c) bias.grad[c] += gb.row(static_cast<Eigen::Index>(c)).sum();
    }
    return dx;
  }
  const std::size_t cin_g = cin_ / o.groups, cout_g = cout_ / o.groups, K = o.kernel;
  const auto S = static_cast<std::ptrdiff_t>(o.stride);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t oc = 0; oc < cout_; ++oc) {
      const double* g = dy.data() + (b * cout_ + oc) * OH * OW;
      double gsum = 0.0;
      for (std::size_t i = 0; i < OH * OW; ++i) gsum += g[i];
      bias.grad[oc] += gsum;
      const std::size_t grp = oc / cout_g;
      for (std::size_t icl = 0; icl < cin_g; ++icl) {
        const std::size_t ic = grp * cin_g + icl;
        const double* in = x.data() + (b * cin_ + ic) * H * W;
        double* din = dx.data() + (b * cin_ + ic) * H * W;
        for (std::size_t kh = 0; kh < K; ++kh) {
          const auto off_h = static_cast<std::ptrdiff_t>(kh * o.dilation) - static_cast<std::ptrdiff_t>(o.padding);
          const auto [h0, h1] = valid_range(off_h, S, static_cast<std::ptrdiff_t>(H), static_cast<std::ptrdiff_t>(OH));
          for (std::size_t kw = 0; kw < K; ++kw) {
            const std::size_t widx = ((oc * cin_g + icl) * K + kh) * K + kw;
            const double wv = weight.value[widx];
            const auto off_w = static_cast<std::ptrdiff_t>(kw * o.dilation) - static_cast<std::ptrdiff_t>(o.padding);
            const auto [w0, w1] = valid_range(off_w, S, static_cast<std::ptrdiff_t>(W), static_cast<std::ptrdiff_t>(OW));
            double gw = 0.0;
            for (std::ptrdiff_t oh = h0; oh < h1; ++oh) {
              const std::ptrdiff_t base = (oh * S + off_h) * static_cast<std::ptrdiff_t>(W);
              const double* grow = g + oh * static_cast<std::ptrdiff_t>(OW);
              for (std::ptrdiff_t ow = w0; ow < w1; ++ow) {
                gw += grow[ow] * in[base + ow * S + off_w];
                din[base + ow * S + off_w] += wv * grow[ow];
              }
            }
            weight.grad[widx] += gw;
          }
        }
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------- ChannelNorm

ChannelNorm::ChannelNorm(const std::string& name, std::size_t channels, double eps)
    : gamma(name + ".gamma", {channels}), beta(name + ".beta", {channels}), eps_(eps) {
  gamma.value.fill(1.0);
}

Tensor ChannelNorm::forward(const Tensor& x) {
  const std::size_t C = gamma.value.size();
  expect_shape(x, {0, C, 0, 0}, gamma.name.c_str());
  const std::size_t B = x.dim(0), P = x.dim(2) * x.dim(3);
  xhat_ = Tensor(x.shape());
  rstd_.assign(B * P, 0.0);
  Tensor y(x.shape());
  std::vector<double> mean(P), var(P);
  for (std::size_t b = 0; b < B; ++b) {
    const double* in = x.data() + b * C * P;
    std::fill(mean.begin(), mean.end(), 0.0);
    std::fill(var.begin(), var.end(), 0.0);
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t p = 0; p < P; ++p) mean[p] += in[c * P + p];
    }
    for (std::size_t p = 0; p < P; ++p) mean[p] /= static_cast<double>(C);
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t p = 0; p < P; ++p) {
        const double d = in[c * P + p] - mean[p];
        var[p] += d * d;
      }
    }
    for (std::size_t p = 0; p < P; ++p) rstd_[b * P + p] = 1.0 / std::sqrt(var[p] / static_cast<double>(C) + eps_);
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t p = 0; p < P; ++p) {
        const std::size_t i = b * C * P + c * P + p;
        const double h = (in[c * P + p] - mean[p]) * rstd_[b * P + p];
        xhat_[i] = h;
        y[i] = h * gamma.value[c] + beta.value[c];
      }
    }
  }
  return y;
}

Tensor ChannelNorm::backward(const Tensor& dy) {
  const std::size_t C = gamma.value.size();
  const std::size_t B = dy.dim(0), P = dy.dim(2) * dy.dim(3);
  Tensor dx(dy.shape());
  std::vector<double> sum(P), dot(P);
  for (std::size_t b = 0; b < B; ++b) {
    std::fill(sum.begin(), sum.end(), 0.0);
    std::fill(dot.begin(), dot.end(), 0.0);
    for (std::size_t c = 0; c < C; ++c) {
      double gg = 0.0, gb = 0.0;
      for (std::size_t p = 0; p < P; ++p) {
        const std::size_t i = b * C * P + c * P + p;
        gg += dy[i] * xhat_[i];
        gb += dy[i];
        const double dh = dy[i] * gamma.value[c];
        sum[p] += dh;
        dot[p] += dh * xhat_[i];
      }
      gamma.grad[c] += gg;
      beta.grad[c] += gb;
    }
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t p = 0; p < P; ++p) {
        const std::size_t i = b * C * P + c * P + p;
        const double dh = dy[i] * gamma.value[c];
        dx[i] = rstd_[b * P + p] / static_cast<double>(C) *
                (static_cast<double>(C) * dh - sum[p] - xhat_[i] * dot[p]);
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------- Attention

Attention::Attention(const std::string& name, std::size_t d, Rng& rng)
    : wq_(name + ".q", d, d, rng), wk_(name + ".k", d, d, rng), wv_(name + ".v", d, d, rng), wo_(name + ".o", d, d, rng), d_(d) {}

void Attention::collect(ParamList& out) {
  wq_.collect(out);
  wk_.collect(out);
  wv_.collect(out);
  wo_.collect(out);
}

Tensor Attention::forward(const Tensor& query, const Tensor& memory) {
  expect_shape(query, {0, 0, d_}, "Attention query");
  expect_shape(memory, {query.dim(0), 0, d_}, "Attention memory");
  const std::size_t B = query.dim(0), Lq = query.dim(1), Lk = memory.dim(1);
  q_ = wq_.forward(query);
  k_ = wk_.forward(memory);
  v_ = wv_.forward(memory);
  attn_ = Tensor({B, Lq, Lk});
  Tensor ctx({B, Lq, d_});
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_));
  const auto D = static_cast<Eigen::Index>(d_);
  for (std::size_t b = 0; b < B; ++b) {
    ConstMatMap Q(q_.data() + b * Lq * d_, static_cast<Eigen::Index>(Lq), D);
    ConstMatMap Km(k_.data() + b * Lk * d_, static_cast<Eigen::Index>(Lk), D);
    ConstMatMap V(v_.data() + b * Lk * d_, static_cast<Eigen::Index>(Lk), D);
    MatMap A(attn_.data() + b * Lq * Lk, static_cast<Eigen::Index>(Lq), static_cast<Eigen::Index>(Lk));
    A.noalias() = scale * Q * Km.transpose();
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
      const double mx = A.row(i).maxCoeff();
      A.row(i) = (A.row(i).array() - mx).exp();
      A.row(i) /= A.row(i).sum();
    }
    MatMap O(ctx.data() + b * Lq * d_, static_cast<Eigen::Index>(Lq), D);
    O.noalias() = A * V;
  }
  return wo_.forward(ctx);
}

std::pair<Tensor, Tensor> Attention::backward(const Tensor& dy) {
  const Tensor dctx = wo_.backward(dy);
  const std::size_t B = attn_.dim(0), Lq = attn_.dim(1), Lk = attn_.dim(2);
  const auto D = static_cast<Eigen::Index>(d_);
  Tensor dq(q_.shape()), dk(k_.shape()), dv(v_.shape());
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_));
  for (std::size_t b = 0; b < B; ++b) {
    ConstMatMap Q(q_.data() + b * Lq * d_, static_cast<Eigen::Index>(Lq), D);
    ConstMatMap Km(k_.data() + b * Lk * d_, static_cast<Eigen::Index>(Lk), D);
    ConstMatMap V(v_.data() + b * Lk * d_, static_cast<Eigen::Index>(Lk), D);
    ConstMatMap A(attn_.data() + b * Lq * Lk, static_cast<Eigen::Index>(Lq), static_cast<Eigen::Index>(Lk));
    ConstMatMap dO(dctx.data() + b * Lq * d_, static_cast<Eigen::Index>(Lq), D);
    MatMap dV(dv.data() + b * Lk * d_, static_cast<Eigen::Index>(Lk), D);
    dV.noalias() = A.transpose() * dO;
    RowMatrix dA = dO * V.transpose();
    const Eigen::VectorXd row_dot = (dA.array() * A.array()).rowwise().sum();
    RowMatrix dS = A.array() * (dA.colwise() - row_dot).array();
    MatMap dQ(dq.data() + b * Lq * d_, static_cast<Eigen::Index>(Lq), D);
    MatMap dK(dk.data() + b * Lk * d_, static_cast<Eigen::Index>(Lk), D);
    dQ.noalias() = scale * dS * Km;
    dK.noalias() = scale * dS.transpose() * Q;
  }
  Tensor dquery = wq_.backward(dq);
  Tensor dmemory = wk_.backward(dk);
  add_inplace(dmemory, wv_.backward(dv));
  return {std::move(dquery), std::move(dmemory)};
}

// ---------------------------------------------------------------- elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  add_inplace(out, b);
  return out;
}

void add_inplace(Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ValidationError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ValidationError("sub: shape mismatch");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ValidationError("mul: shape mismatch");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

}  // namespace crashformer::nn
