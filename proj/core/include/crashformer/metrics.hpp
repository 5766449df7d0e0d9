#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "crashformer/tensor.hpp"

namespace crashformer::eval {

struct Metrics {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision_1 = 0.0, recall_1 = 0.0, f1_1 = 0.0;
  double precision_0 = 0.0, recall_0 = 0.0, f1_0 = 0.0;

  std::size_t n() const { return tp + fp + fn + tn; }
};

/// Per-class precision/recall/F1; any 0/0 ratio is taken as 0.
Metrics f1_per_class(std::span<const std::uint8_t> preds, std::span<const std::uint8_t> labels);

/// Row-wise argmax of (n x 2) probabilities; ties go to label 0.
std::vector<std::uint8_t> argmax_predictions(const nn::Tensor& probs);

/// (ours / other - 1) * 100. Infinite when other is 0 and ours is not.
double relative_improvement_percent(double ours, double other);

}  // namespace crashformer::eval
