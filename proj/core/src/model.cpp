#include "crashformer/model.hpp"

#include <cmath>
#include <set>

#include <json.hpp>

#include "crashformer/error.hpp"

namespace crashformer::model {

using nlohmann::json;

void ModelConfig::validate() const {
  const auto fail = [](const std::string& m) { throw ValidationError("model config: " + m); };
  if (K < 1) fail("K must be >= 1");
  if (d_model < 1 || d_ff < 1 || n_enc_layers < 0) fail("d_model, d_ff must be positive and n_enc_layers >= 0");
  if (n_modes < 1 || n_modes > K / 2 + 1) {
    fail("n_modes " + std::to_string(n_modes) + " outside [1, " + std::to_string(K / 2 + 1) + "] for K=" +
         std::to_string(K));
  }
  if (decomp_kernel < 1 || decomp_kernel % 2 == 0) fail("decomp_kernel must be odd");
  if (decomp_kernel / 2 > K - 1) fail("decomp_kernel too wide for K=" + std::to_string(K));
  if (img_channels.empty()) fail("img_channels must list at least one stage");
  for (int c : img_channels) {
    if (c < 1) fail("img_channels entries must be positive");
  }
  if (img_size < 1) fail("img_size must be positive");
  if (demo_hidden < 1 || clf_hidden < 1) fail("hidden widths must be positive");
  if (seq_out + img_out + demo_out != static_cast<int>(kFusedWidth)) fail("seq_out + img_out + demo_out must be 380");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
}

std::string to_json(const ModelConfig& c) {
  json j;
  j["K"] = c.K;
  j["d_model"] = c.d_model;
  j["d_ff"] = c.d_ff;
  j["n_enc_layers"] = c.n_enc_layers;
  j["n_modes"] = c.n_modes;
  j["decomp_kernel"] = c.decomp_kernel;
  j["img_channels"] = c.img_channels;
  j["img_size"] = c.img_size;
  j["demo_hidden"] = c.demo_hidden;
  j["clf_hidden"] = c.clf_hidden;
  j["seq_out"] = c.seq_out;
  j["img_out"] = c.img_out;
  j["demo_out"] = c.demo_out;
  j["dropout"] = c.dropout;
  j["use_img"] = c.use_img;
  j["use_demo"] = c.use_demo;
  j["seed"] = c.seed;
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("model config: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("model config: expected an object");
  ModelConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "K") c.K = v.get<int>();
      else if (key == "d_model") c.d_model = v.get<int>();
      else if (key == "d_ff") c.d_ff = v.get<int>();
      else if (key == "n_enc_layers") c.n_enc_layers = v.get<int>();
      else if (key == "n_modes") c.n_modes = v.get<int>();
      else if (key == "decomp_kernel") c.decomp_kernel = v.get<int>();
      else if (key == "img_channels") c.img_channels = v.get<std::vector<int>>();
      else if (key == "img_size") c.img_size = v.get<int>();
      else if (key == "demo_hidden") c.demo_hidden = v.get<int>();
      else if (key == "clf_hidden") c.clf_hidden = v.get<int>();
      else if (key == "seq_out") c.seq_out = v.get<int>();
      else if (key == "img_out") c.img_out = v.get<int>();
      else if (key == "demo_out") c.demo_out = v.get<int>();
      else if (key == "dropout") c.dropout = v.get<double>();
      else if (key == "use_img") c.use_img = v.get<bool>();
      else if (key == "use_demo") c.use_demo = v.get<bool>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else throw ValidationError("model config: unknown key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------- Classifier

Prediction Classifier::predict(const Batch& batch) { return Prediction{nn::softmax_rows(forward(batch, false))}; }

void Classifier::zero_grad() {
  for (auto* p : parameters()) p->grad.zero();
}

namespace {

const ModelConfig& validated(const ModelConfig& c) {
  c.validate();
  return c;
}

Tensor broadcast_row(const nn::Param& p, std::size_t B) {
  const std::size_t w = p.value.size();
  Tensor out({B, w});
  for (std::size_t b = 0; b < B; ++b) std::copy_n(p.value.data(), w, out.data() + b * w);
  return out;
}

Tensor columns(const Tensor& x, std::size_t from, std::size_t width) {
  const std::size_t B = x.dim(0), W = x.dim(1);
  Tensor out({B, width});
  for (std::size_t b = 0; b < B; ++b) std::copy_n(x.data() + b * W + from, width, out.data() + b * width);
  return out;
}

}  // namespace

CrashFormer::CrashFormer(const ModelConfig& cfg)
    : cfg_(validated(cfg)),
      init_rng_(cfg.seed),
      seq_(cfg_, init_rng_),
      img_(cfg_, init_rng_),
      demo_(cfg_, init_rng_),
      head_(cfg_, init_rng_),
      img_placeholder_("placeholder.img", {static_cast<std::size_t>(cfg.img_out)}),
      demo_placeholder_("placeholder.demo", {static_cast<std::size_t>(cfg.demo_out)}),
      dropout_rng_(cfg.seed ^ 0x9e3779b97f4a7c15ULL) {
  for (auto& v : img_placeholder_.value.values()) v = 0.02 * init_rng_.normal();
  for (auto& v : demo_placeholder_.value.values()) v = 0.02 * init_rng_.normal();
}

nn::ParamList CrashFormer::parameters() {
  nn::ParamList out;
  seq_.collect(out);
  img_.collect(out);
  demo_.collect(out);
  head_.collect(out);
  out.push_back(&img_placeholder_);
  out.push_back(&demo_placeholder_);
  return out;
}

Tensor CrashFormer::forward(const Batch& batch, bool training) {
  latents_.seq = seq_.forward(batch.history, training, dropout_rng_);
  const std::size_t B = latents_.seq.dim(0);
  if (batch.labels.size() != B && !batch.labels.empty()) throw ValidationError("batch: label count mismatch");

  if (cfg_.use_img) {
    if (batch.image_index.size() != B) throw ValidationError("batch: image_index size mismatch");
    const Tensor per_image = img_.forward(batch.images);
    n_images_ = per_image.dim(0);
    image_index_ = batch.image_index;
    const std::size_t W = per_image.dim(1);
    latents_.img = Tensor({B, W});
    for (std::size_t b = 0; b < B; ++b) {
      if (image_index_[b] >= n_images_) throw ValidationError("batch: image index out of range");
      std::copy_n(per_image.data() + image_index_[b] * W, W, latents_.img.data() + b * W);
    }
  } else {
    latents_.img = broadcast_row(img_placeholder_, B);
  }

  if (cfg_.use_demo) {
    if (batch.demo.rank() != 2 || batch.demo.dim(0) != B) throw ValidationError("batch: demographics size mismatch");
    latents_.demo = demo_.forward(batch.demo);
  } else {
    latents_.demo = broadcast_row(demo_placeholder_, B);
  }

  latents_.fused = fuse(latents_.seq, latents_.img, latents_.demo);
  return head_.forward(latents_.fused, training, dropout_rng_);
}

void CrashFormer::backward(const Tensor& dlogits) {
  const Tensor dfused = head_.backward(dlogits);
  const auto S = static_cast<std::size_t>(cfg_.seq_out);
  const auto I = static_cast<std::size_t>(cfg_.img_out);
  const auto D = static_cast<std::size_t>(cfg_.demo_out);
  const std::size_t B = dfused.dim(0);
  seq_.backward(columns(dfused, 0, S));

  const Tensor dimg = columns(dfused, S, I);
  if (cfg_.use_img) {
    Tensor per_image({n_images_, I});
    for (std::size_t b = 0; b < B; ++b) {
      double* dst = per_image.data() + image_index_[b] * I;
      for (std::size_t i = 0; i < I; ++i) dst[i] += dimg[b * I + i];
    }
    img_.backward(per_image);
  } else {
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t i = 0; i < I; ++i) img_placeholder_.grad[i] += dimg[b * I + i];
    }
  }

  const Tensor ddemo = columns(dfused, S + I, D);
  if (cfg_.use_demo) {
    demo_.backward(ddemo);
  } else {
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t i = 0; i < D; ++i) demo_placeholder_.grad[i] += ddemo[b * D + i];
    }
  }
}

// ---------------------------------------------------------------- loss

namespace {

void check_loss_inputs(const Tensor& t, const std::vector<std::uint8_t>& labels) {
  nn::expect_shape(t, {0, 2}, "loss input");
  if (t.dim(0) != labels.size()) throw ValidationError("loss: label count mismatch");
  if (labels.empty()) throw ValidationError("loss: empty batch");
}

}  // namespace

LossResult weighted_ce(const Tensor& logits, const std::vector<std::uint8_t>& labels, const dataset::ClassWeights& w) {
  check_loss_inputs(logits, labels);
  const std::size_t B = labels.size();
  LossResult r;
  r.dlogits = Tensor({B, 2});
  const double invB = 1.0 / static_cast<double>(B);
  for (std::size_t b = 0; b < B; ++b) {
    const double z0 = logits[2 * b], z1 = logits[2 * b + 1];
    const double m = std::max(z0, z1);
    const double lse = m + std::log(std::exp(z0 - m) + std::exp(z1 - m));
    const int y = labels[b] ? 1 : 0;
    const double wy = y ? w.w1 : w.w0;
    r.loss += wy * (lse - (y ? z1 : z0));
    const double p0 = std::exp(z0 - lse), p1 = std::exp(z1 - lse);
    r.dlogits[2 * b] = wy * invB * (p0 - (y == 0 ? 1.0 : 0.0));
    r.dlogits[2 * b + 1] = wy * invB * (p1 - (y == 1 ? 1.0 : 0.0));
  }
  r.loss *= invB;
  return r;
}

double weighted_ce_probs(const Tensor& probs, const std::vector<std::uint8_t>& labels, const dataset::ClassWeights& w) {
  check_loss_inputs(probs, labels);
  double loss = 0.0;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    const int y = labels[b] ? 1 : 0;
    loss -= (y ? w.w1 : w.w0) * std::log(probs[2 * b + static_cast<std::size_t>(y)]);
  }
  return loss / static_cast<double>(labels.size());
}

std::vector<double> image_planes(const RgbImage& img, int size) {
  if (size < 1) throw ValidationError("image size must be positive");
  RgbImage src = img;
  if (src.width != size || src.height != size) {
    if (src.width == src.height && src.width % size == 0) {
      src = downsample_box(src, src.width / size);
    } else {
      src = resize_nearest(src, size, size);
    }
  }
  const auto n = static_cast<std::size_t>(size) * static_cast<std::size_t>(size);
  std::vector<double> out(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 3; ++c) out[c * n + i] = src.pixels[i * 3 + c] / 255.0;
  }
  return out;
}

}  // namespace crashformer::model
