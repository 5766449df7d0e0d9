#include "crashformer/metrics.hpp"

#include <limits>

#include "crashformer/error.hpp"

namespace crashformer::eval {

namespace {

double ratio(std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); }

double f1(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

}  // namespace

Metrics f1_per_class(std::span<const std::uint8_t> preds, std::span<const std::uint8_t> labels) {
  if (preds.size() != labels.size()) {
    throw ValidationError("f1: " + std::to_string(preds.size()) + " predictions for " + std::to_string(labels.size()) +
                          " labels");
  }
  if (labels.empty()) throw ValidationError("f1: no samples");
  Metrics m;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool p = preds[i] != 0, y = labels[i] != 0;
    if (p && y) ++m.tp;
    else if (p) ++m.fp;
    else if (y) ++m.fn;
    else ++m.tn;
  }
  m.precision_1 = ratio(m.tp, m.tp + m.fp);
  m.recall_1 = ratio(m.tp, m.tp + m.fn);
  m.f1_1 = f1(m.precision_1, m.recall_1);
  m.precision_0 = ratio(m.tn, m.tn + m.fn);
  m.recall_0 = ratio(m.tn, m.tn + m.fp);
  m.f1_0 = f1(m.precision_0, m.recall_0);
  return m;
}

std::vector<std::uint8_t> argmax_predictions(const nn::Tensor& probs) {
  nn::expect_shape(probs, {0, 2}, "probabilities");
  std::vector<std::uint8_t> out(probs.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = probs[2 * i + 1] > probs[2 * i] ? 1 : 0;
  return out;
}

double relative_improvement_percent(double ours, double other) {
  if (other == 0.0) return ours == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return (ours / other - 1.0) * 100.0;
}

}  // namespace crashformer::eval
