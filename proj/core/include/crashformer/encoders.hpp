#pragma once

#include <vector>

#include "crashformer/layers.hpp"
#include "crashformer/model_config.hpp"

namespace crashformer::model {

using nn::Tensor;

/// Encoder-only decomposed Fourier transformer over a (B, K, 27) history.
class SeqEncoder {
 public:
  SeqEncoder(const ModelConfig& cfg, Rng& rng);

  /// (B, K, 27) -> (B, seq_out)
  Tensor forward(const Tensor& history, bool training, Rng& rng);
  /// Returns the gradient w.r.t. the history.
  Tensor backward(const Tensor& dy);
  void collect(nn::ParamList& out);

  nn::Linear& embed() { return embed_; }
  nn::FourierBlock& feb(std::size_t layer) { return layers_.at(layer).feb; }

 private:
  struct Layer {
    nn::FourierBlock feb;
    nn::Linear ff1;
    nn::Gelu act;
    nn::Dropout drop;
    nn::Linear ff2;
  };

  std::size_t K_;
  std::size_t d_;
  int kernel_;
  nn::Linear embed_;
  nn::Param pos_;
  std::vector<Layer> layers_;
  nn::Linear out_;
};

/// a = pointwise(dilated_dw7x7(dw5x5(x))); output = a * x.
class LargeKernelAttention {
 public:
  LargeKernelAttention(const std::string& name, std::size_t channels, Rng& rng);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);
  void collect(nn::ParamList& out);
  void set_identity();

  nn::Conv2d conv0;
  nn::Conv2d conv_spatial;
  nn::Conv2d conv1;

 private:
  Tensor input_;
  Tensor attn_;
};

/// Stage-wise large-kernel-attention CNN: (U, 3, S, S) -> (U, img_out).
class ImageEncoder {
 public:
  ImageEncoder(const ModelConfig& cfg, Rng& rng);

  Tensor forward(const Tensor& images);
  Tensor backward(const Tensor& dy);
  void collect(nn::ParamList& out);

 private:
  struct Block {
    nn::ChannelNorm norm1;
    nn::Conv2d proj1;
    nn::Gelu act1;
    LargeKernelAttention lka;
    nn::Conv2d proj2;
    nn::ChannelNorm norm2;
    nn::Conv2d fc1;
    nn::Gelu act2;
    nn::Conv2d fc2;
  };
  struct Stage {
    nn::Conv2d patch;
    nn::ChannelNorm patch_norm;
    Block block;
  };

  std::size_t size_;
  std::vector<Stage> stages_;
  nn::ChannelNorm final_norm_;
  nn::Linear head_;
  std::vector<std::size_t> pooled_shape_;
};

/// 144 -> demo_hidden -> demo_out.
class DemoEncoder {
 public:
  DemoEncoder(const ModelConfig& cfg, Rng& rng);

  Tensor forward(const Tensor& demo);
  Tensor backward(const Tensor& dy);
  void collect(nn::ParamList& out);

  nn::Linear fc1;
  nn::Linear fc2;

 private:
  nn::Gelu act_;
};

/// 380 -> clf_hidden -> 2 logits.
class ClassifierHead {
 public:
  ClassifierHead(const ModelConfig& cfg, Rng& rng);

  Tensor forward(const Tensor& fused, bool training, Rng& rng);
  Tensor backward(const Tensor& dy);
  void collect(nn::ParamList& out);

  nn::Linear fc1;
  nn::Linear fc2;

 private:
  nn::Gelu act_;
  nn::Dropout drop_;
};

/// Concatenates [seq | img | demo] along the feature axis.
Tensor fuse(const Tensor& seq, const Tensor& img, const Tensor& demo);

}  // namespace crashformer::model
