#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace crashformer::model {

inline constexpr std::size_t kSeqOut = 224;
inline constexpr std::size_t kImgOut = 128;
inline constexpr std::size_t kDemoOut = 28;
inline constexpr std::size_t kFusedWidth = kSeqOut + kImgOut + kDemoOut;

struct ModelConfig {
  int K = 4;
  int d_model = 64;
  int d_ff = 128;
  int n_enc_layers = 2;
  int n_modes = 2;
  int decomp_kernel = 3;
  std::vector<int> img_channels{8, 16, 32};
  /// Tiles are box-downsampled to img_size x img_size before encoding.
  int img_size = 256;
  int demo_hidden = 64;
  int clf_hidden = 128;
  int seq_out = static_cast<int>(kSeqOut);
  int img_out = static_cast<int>(kImgOut);
  int demo_out = static_cast<int>(kDemoOut);
  double dropout = 0.1;
  bool use_img = true;
  bool use_demo = true;
  std::uint64_t seed = 0;

  /// Throws ValidationError on a broken invariant.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Canonical JSON with sorted keys.
std::string to_json(const ModelConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
ModelConfig model_config_from_json(const std::string& text);

}  // namespace crashformer::model
