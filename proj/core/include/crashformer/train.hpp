#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "crashformer/checkpoint.hpp"
#include "crashformer/dataset.hpp"
#include "crashformer/model.hpp"

namespace crashformer::train {

struct TrainConfig {
  int max_epochs = 200;
  int early_stop_patience = 10;
  double lr_init = 1e-3;
  double lr_factor = 0.9;
  int lr_patience = 5;
  double lr_min = 1e-6;
  std::size_t batch_size = 256;
  std::uint64_t seed = 0;
  dataset::ClassWeights class_weights;
  /// Global gradient-norm clip; 0 disables clipping.
  double grad_clip = 5.0;
  /// A validation loss counts as an improvement only if it beats the best so
  /// far by at least this much.
  double min_improvement = 1e-6;

  void validate() const;
};

/// Sorted-key JSON for provenance records.
std::string to_json(const TrainConfig& c);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  double wall_seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_loss = 0.0;

  /// One JSON object per epoch, newline-terminated. Wall time is left out so
  /// reruns produce identical files.
  std::string to_jsonl() const;
};

/// Reduce-on-plateau state shared by the loop and its tests.
struct PlateauState {
  double lr = 1e-3;
  int epochs_without_improvement = 0;
};

/// Applies one epoch's outcome: resets the counter on improvement, otherwise
/// counts it and multiplies lr by lr_factor (floored at lr_min) once the
/// counter reaches lr_patience, then resets the counter.
PlateauState lr_step(PlateauState s, bool improved, const TrainConfig& cfg);

/// True iff the best validation loss has not improved during the last
/// early_stop_patience epochs.
bool early_stop(const std::vector<double>& val_losses, const TrainConfig& cfg);

/// What the loop needs from a model plus its data.
class Trainable {
 public:
  virtual ~Trainable() = default;
  virtual nn::ParamList parameters() = 0;
  /// Forward + backward on one mini-batch of training indices; returns the
  /// mean loss. Gradients are zeroed by the caller.
  virtual double train_batch(std::span<const std::size_t> indices) = 0;
  /// Mean loss over the given indices in inference mode.
  virtual double evaluate(std::span<const std::size_t> indices) = 0;
};

class Adam {
 public:
  Adam(nn::ParamList params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(double lr);

 private:
  nn::ParamList params_;
  double b1_, b2_, eps_;
  long t_ = 0;
  std::vector<nn::Tensor> m_, v_;
};

/// Scales gradients so their global L2 norm is at most max_norm; returns the
/// norm before clipping.
double clip_grad_norm(const nn::ParamList& params, double max_norm);

struct TrainResult {
  TrainHistory history;
  /// Parameters at the best validation epoch; already restored into the model.
  model::Snapshot best;
};

/// Adam training with seeded per-epoch shuffling, reduce-on-plateau and early
/// stopping on validation loss. Throws RuntimeFailure on a non-finite loss.
TrainResult train_loop(Trainable& t, std::vector<std::size_t> train_idx, const std::vector<std::size_t>& val_idx,
                       const TrainConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Tile pixels per tile_ref, loaded once and scaled to the model's img_size.
class ImageBank {
 public:
  ImageBank() = default;
  static ImageBank load(const dataset::Container& c, int img_size);

  bool empty() const { return planes_.empty(); }
  int size() const { return size_; }
  const std::vector<double>& planes(std::uint32_t tile_ref) const { return planes_.at(tile_ref); }

 private:
  int size_ = 0;
  std::vector<std::vector<double>> planes_;
};

/// Gathers samples into a model batch; each distinct tile is stored once.
model::Batch make_batch(const dataset::Container& c, const ImageBank& bank, std::span<const std::size_t> indices);

/// Adapts a Classifier over a dataset container to the training loop.
class ClassifierTrainable final : public Trainable {
 public:
  ClassifierTrainable(model::Classifier& m, const dataset::Container& c, const ImageBank& bank,
                      dataset::ClassWeights w, std::size_t eval_batch = 1024);

  nn::ParamList parameters() override { return model_.parameters(); }
  double train_batch(std::span<const std::size_t> indices) override;
  double evaluate(std::span<const std::size_t> indices) override;

 private:
  model::Classifier& model_;
  const dataset::Container& data_;
  const ImageBank& bank_;
  dataset::ClassWeights weights_;
  std::size_t eval_batch_;
};

/// Inference probabilities (n x 2) for the given samples, in order.
nn::Tensor predict_probs(model::Classifier& m, const dataset::Container& c, const ImageBank& bank,
                         std::span<const std::size_t> indices, std::size_t batch_size = 1024);

}  // namespace crashformer::train
