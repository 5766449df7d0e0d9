#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace crashformer::nn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

/// Dense row-major tensor of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  /// View as (size / last_dim) x last_dim.
  MatMap rows();
  ConstMatMap rows() const;
  MatMap matrix(std::size_t r, std::size_t c);
  ConstMatMap matrix(std::size_t r, std::size_t c) const;

  Tensor& reshape(std::vector<std::size_t> shape);
  void fill(double v);
  void zero() { fill(0.0); }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::string shape_str(const std::vector<std::size_t>& shape);

/// Throws ValidationError unless `t` has exactly `expected` (0 = any extent).
void expect_shape(const Tensor& t, std::initializer_list<std::size_t> expected, const char* what);

/// Trainable parameter. `name` is its canonical dotted checkpoint key.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  Param() = default;
  Param(std::string n, std::vector<std::size_t> shape) : name(std::move(n)), value(shape), grad(shape) {}
};

using ParamList = std::vector<Param*>;

/// Row-wise softmax of a (N x C) tensor.
Tensor softmax_rows(const Tensor& logits);

}  // namespace crashformer::nn
