#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "crashformer/train.hpp"

namespace crashformer::testing {

/// Stub model for the training loop: one parameter, validation loss read from
/// a script indexed by epoch (1-based). Records the parameter value seen at
/// every validation pass so the restored snapshot can be checked.
class ScriptedTrainable final : public train::Trainable {
 public:
  explicit ScriptedTrainable(std::function<double(int)> val_loss, std::function<double(int)> train_loss = {})
      : val_loss_(std::move(val_loss)), train_loss_(std::move(train_loss)), w_("w", {1}) {}

  nn::ParamList parameters() override { return {&w_}; }
  double train_batch(std::span<const std::size_t>) override {
    w_.grad[0] = 1.0;
    return train_loss_ ? train_loss_(epoch_ + 1) : 1.0;
  }
  double evaluate(std::span<const std::size_t>) override {
    ++epoch_;
    seen_.push_back(w_.value[0]);
    return val_loss_(epoch_);
  }

  double weight() const { return w_.value[0]; }
  double weight_at_epoch(int epoch) const { return seen_.at(static_cast<std::size_t>(epoch - 1)); }
  int epochs_run() const { return epoch_; }

 private:
  std::function<double(int)> val_loss_;
  std::function<double(int)> train_loss_;
  nn::Param w_;
  int epoch_ = 0;
  std::vector<double> seen_;
};

inline std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

/// Validation improves for `improving` epochs, then worsens every epoch.
inline std::function<double(int)> improve_then_worsen(int improving) {
  return [improving](int e) { return e <= improving ? 1.0 / e : 1.0 / improving + 0.01 * (e - improving); };
}

}  // namespace crashformer::testing
