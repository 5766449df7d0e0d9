#pragma once

#include "crashformer/model.hpp"

// Sequence-only comparison models. Both read batch.history and nothing else.
namespace crashformer::eval {

using model::Batch;
using nn::Tensor;

/// Decomposition-linear model: one linear map over the flattened seasonal part
/// plus one over the flattened trend part, summed, then a linear head.
class DLinear final : public model::Classifier {
 public:
  explicit DLinear(const model::ModelConfig& cfg);

  Tensor forward(const Batch& batch, bool training) override;
  void backward(const Tensor& dlogits) override;
  nn::ParamList parameters() override;
  std::string kind() const override { return "dlinear"; }
  const model::ModelConfig& config() const override { return cfg_; }

 private:
  model::ModelConfig cfg_;
  Rng rng_;
  nn::Linear seasonal_;
  nn::Linear trend_;
  nn::Linear head_;
  std::size_t batch_ = 0;
};

/// Full-attention encoder/decoder: two post-norm encoder layers and one
/// decoder layer whose learned query token attends over the encoded history.
class VanillaTransformer final : public model::Classifier {
 public:
  explicit VanillaTransformer(const model::ModelConfig& cfg);

  Tensor forward(const Batch& batch, bool training) override;
  void backward(const Tensor& dlogits) override;
  nn::ParamList parameters() override;
  std::string kind() const override { return "transformer"; }
  const model::ModelConfig& config() const override { return cfg_; }

  /// Encoder self-attention weights of the most recent forward, per layer.
  const nn::Tensor& encoder_attention(std::size_t layer) const { return enc_.at(layer).attn.weights(); }

 private:
  struct Layer {
    nn::Attention attn;
    nn::LayerNorm norm1;
    nn::Linear ff1;
    nn::Gelu act;
    nn::Linear ff2;
    nn::LayerNorm norm2;
  };
  Layer make_layer(const std::string& name);
  static Tensor layer_backward(Layer& l, const Tensor& dy, Tensor* dmemory);

  model::ModelConfig cfg_;
  Rng rng_;
  std::size_t K_;
  std::size_t d_;
  nn::Linear embed_;
  nn::Param pos_;
  std::vector<Layer> enc_;
  nn::Param query_;
  Layer dec_;
  nn::Linear head_;
  std::size_t batch_ = 0;
};

}  // namespace crashformer::eval
