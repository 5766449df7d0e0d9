#include "crashformer/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "crashformer/error.hpp"

namespace crashformer::nn {

namespace {
std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)), data_(product(shape_), fill) {}

MatMap Tensor::rows() {
  const std::size_t c = shape_.empty() ? 1 : shape_.back();
  return MatMap(data_.data(), static_cast<Eigen::Index>(c ? size() / c : 0), static_cast<Eigen::Index>(c));
}

ConstMatMap Tensor::rows() const {
  const std::size_t c = shape_.empty() ? 1 : shape_.back();
  return ConstMatMap(data_.data(), static_cast<Eigen::Index>(c ? size() / c : 0), static_cast<Eigen::Index>(c));
}

MatMap Tensor::matrix(std::size_t r, std::size_t c) {
  if (r * c != size()) throw ValidationError("matrix view " + std::to_string(r) + "x" + std::to_string(c) + " of " + shape_str(shape_));
  return MatMap(data_.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

ConstMatMap Tensor::matrix(std::size_t r, std::size_t c) const {
  if (r * c != size()) throw ValidationError("matrix view " + std::to_string(r) + "x" + std::to_string(c) + " of " + shape_str(shape_));
  return ConstMatMap(data_.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

Tensor& Tensor::reshape(std::vector<std::size_t> shape) {
  if (product(shape) != size()) throw ValidationError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  shape_ = std::move(shape);
  return *this;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

void expect_shape(const Tensor& t, std::initializer_list<std::size_t> expected, const char* what) {
  bool ok = t.rank() == expected.size();
  std::size_t i = 0;
  for (auto e : expected) {
    if (!ok) break;
    ok = e == 0 || t.dim(i) == e;
    ++i;
  }
  if (!ok) {
    throw ValidationError(std::string(what) + ": shape mismatch, got " + shape_str(t.shape()) + ", expected " +
                          shape_str(std::vector<std::size_t>(expected)) + " (0 = any)");
  }
}

Tensor softmax_rows(const Tensor& logits) {
  Tensor out = logits;
  auto m = out.rows();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double mx = m.row(i).maxCoeff();
    m.row(i) = (m.row(i).array() - mx).exp();
    m.row(i) /= m.row(i).sum();
  }
  return out;
}

}  // namespace crashformer::nn
