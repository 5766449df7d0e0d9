#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "crashformer/dataset.hpp"
#include "crashformer/encoders.hpp"
#include "crashformer/png_io.hpp"

namespace crashformer::model {

/// One mini-batch. Tiles are stored once per distinct region.
struct Batch {
  Tensor history;  // (B, K, 27)
  Tensor demo;     // (B, 144)
  Tensor images;   // (U, 3, S, S), pixels in [0, 1]
  std::vector<std::size_t> image_index;  // B entries into images
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return labels.size(); }
};

struct Latents {
  Tensor seq;    // (B, 224)
  Tensor img;    // (B, 128)
  Tensor demo;   // (B, 28)
  Tensor fused;  // (B, 380)
};

/// Row-stochastic (B, 2) probabilities.
struct Prediction {
  Tensor probs;
};

/// Common interface of CrashFormer and the sequence-only baselines.
class Classifier {
 public:
  virtual ~Classifier() = default;

  /// Returns (B, 2) logits and caches what backward needs.
  virtual Tensor forward(const Batch& batch, bool training) = 0;
  /// Accumulates parameter gradients from d loss / d logits.
  virtual void backward(const Tensor& dlogits) = 0;
  virtual nn::ParamList parameters() = 0;
  virtual std::string kind() const = 0;
  virtual const ModelConfig& config() const = 0;

  Prediction predict(const Batch& batch);
  void zero_grad();
};

class CrashFormer final : public Classifier {
 public:
  explicit CrashFormer(const ModelConfig& cfg);

  Tensor forward(const Batch& batch, bool training) override;
  void backward(const Tensor& dlogits) override;
  nn::ParamList parameters() override;
  std::string kind() const override { return "crashformer"; }
  const ModelConfig& config() const override { return cfg_; }

  /// Latents of the most recent forward call.
  const Latents& latents() const { return latents_; }

  SeqEncoder& seq_encoder() { return seq_; }
  ImageEncoder& image_encoder() { return img_; }
  DemoEncoder& demo_encoder() { return demo_; }
  ClassifierHead& head() { return head_; }

 private:
  ModelConfig cfg_;
  Rng init_rng_;
  SeqEncoder seq_;
  ImageEncoder img_;
  DemoEncoder demo_;
  ClassifierHead head_;
  nn::Param img_placeholder_;
  nn::Param demo_placeholder_;
  Rng dropout_rng_;
  Latents latents_;
  std::vector<std::size_t> image_index_;
  std::size_t n_images_ = 0;
};

struct LossResult {
  double loss = 0.0;
  Tensor dlogits;
};

/// Mean over the batch of -w_y log softmax(logits)_y, via log-sum-exp.
LossResult weighted_ce(const Tensor& logits, const std::vector<std::uint8_t>& labels, const dataset::ClassWeights& w);
/// The same loss evaluated on probabilities.
double weighted_ce_probs(const Tensor& probs, const std::vector<std::uint8_t>& labels, const dataset::ClassWeights& w);

/// Converts an RGB image to a (3, size, size) tensor scaled to [0, 1],
/// box-downsampling (or nearest-resizing) to `size` first.
std::vector<double> image_planes(const RgbImage& img, int size);

}  // namespace crashformer::model
