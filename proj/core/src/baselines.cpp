#include "crashformer/baselines.hpp"

#include "crashformer/featurize.hpp"

namespace crashformer::eval {

namespace {

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

}  // namespace

// ---------------------------------------------------------------- DLinear

DLinear::DLinear(const model::ModelConfig& cfg)
    : cfg_((cfg.validate(), cfg)),
      rng_(cfg.seed),
      seasonal_("dlinear.seasonal", sz(cfg.K) * featurize::kFeatureDim, sz(cfg.d_model), rng_),
      trend_("dlinear.trend", sz(cfg.K) * featurize::kFeatureDim, sz(cfg.d_model), rng_),
      head_("dlinear.head", sz(cfg.d_model), 2, rng_) {}

nn::ParamList DLinear::parameters() {
  nn::ParamList out;
  seasonal_.collect(out);
  trend_.collect(out);
  head_.collect(out);
  return out;
}

Tensor DLinear::forward(const Batch& batch, bool /*training*/) {
  nn::expect_shape(batch.history, {0, sz(cfg_.K), featurize::kFeatureDim}, "history");
  batch_ = batch.history.dim(0);
  auto parts = nn::series_decompose(batch.history, cfg_.decomp_kernel);
  const std::size_t flat = sz(cfg_.K) * featurize::kFeatureDim;
  parts.seasonal.reshape({batch_, flat});
  parts.trend.reshape({batch_, flat});
  return head_.forward(nn::add(seasonal_.forward(parts.seasonal), trend_.forward(parts.trend)));
}

void DLinear::backward(const Tensor& dlogits) {
  const Tensor dh = head_.backward(dlogits);
  seasonal_.backward(dh);
  trend_.backward(dh);
}

// ---------------------------------------------------------------- transformer

VanillaTransformer::Layer VanillaTransformer::make_layer(const std::string& name) {
  return Layer{nn::Attention(name + ".attn", d_, rng_), nn::LayerNorm(name + ".norm1", d_),
               nn::Linear(name + ".ff1", d_, sz(cfg_.d_ff), rng_), nn::Gelu{},
               nn::Linear(name + ".ff2", sz(cfg_.d_ff), d_, rng_), nn::LayerNorm(name + ".norm2", d_)};
}

VanillaTransformer::VanillaTransformer(const model::ModelConfig& cfg)
    : cfg_((cfg.validate(), cfg)),
      rng_(cfg.seed),
      K_(sz(cfg.K)),
      d_(sz(cfg.d_model)),
      embed_("transformer.embed", featurize::kFeatureDim, d_, rng_),
      pos_("transformer.pos", {K_, d_}),
      query_("transformer.query", {d_}) {
  for (auto& v : pos_.value.values()) v = 0.02 * rng_.normal();
  for (int i = 0; i < 2; ++i) enc_.push_back(make_layer("transformer.encoder." + std::to_string(i)));
  for (auto& v : query_.value.values()) v = 0.02 * rng_.normal();
  dec_ = make_layer("transformer.decoder");
  head_ = nn::Linear("transformer.head", d_, 2, rng_);
}

nn::ParamList VanillaTransformer::parameters() {
  nn::ParamList out;
  embed_.collect(out);
  out.push_back(&pos_);
  const auto add_layer = [&](Layer& l) {
    l.attn.collect(out);
    l.norm1.collect(out);
    l.ff1.collect(out);
    l.ff2.collect(out);
    l.norm2.collect(out);
  };
  for (auto& l : enc_) add_layer(l);
  out.push_back(&query_);
  add_layer(dec_);
  head_.collect(out);
  return out;
}

Tensor VanillaTransformer::forward(const Batch& batch, bool /*training*/) {
  nn::expect_shape(batch.history, {0, K_, featurize::kFeatureDim}, "history");
  batch_ = batch.history.dim(0);
  Tensor h = embed_.forward(batch.history);
  for (std::size_t b = 0; b < batch_; ++b) {
    for (std::size_t i = 0; i < K_ * d_; ++i) h[b * K_ * d_ + i] += pos_.value[i];
  }
  const auto block = [](Layer& l, const Tensor& x, const Tensor& memory) {
    const Tensor h1 = l.norm1.forward(nn::add(x, l.attn.forward(x, memory)));
    return l.norm2.forward(nn::add(h1, l.ff2.forward(l.act.forward(l.ff1.forward(h1)))));
  };
  for (auto& l : enc_) h = block(l, h, h);
  Tensor q({batch_, 1, d_});
  for (std::size_t b = 0; b < batch_; ++b) std::copy_n(query_.value.data(), d_, q.data() + b * d_);
  Tensor y = block(dec_, q, h);
  y.reshape({batch_, d_});
  return head_.forward(y);
}

Tensor VanillaTransformer::layer_backward(Layer& l, const Tensor& dy, Tensor* dmemory) {
  const Tensor g = l.norm2.backward(dy);
  Tensor dh1 = l.ff1.backward(l.act.backward(l.ff2.backward(g)));
  nn::add_inplace(dh1, g);
  const Tensor g1 = l.norm1.backward(dh1);
  auto [dq, dm] = l.attn.backward(g1);
  nn::add_inplace(dq, g1);
  if (dmemory) {
    *dmemory = std::move(dm);
  } else {
    nn::add_inplace(dq, dm);
  }
  return dq;
}

void VanillaTransformer::backward(const Tensor& dlogits) {
  Tensor dy = head_.backward(dlogits);
  dy.reshape({batch_, 1, d_});
  Tensor dh;
  const Tensor dq = layer_backward(dec_, dy, &dh);
  for (std::size_t b = 0; b < batch_; ++b) {
    for (std::size_t i = 0; i < d_; ++i) query_.grad[i] += dq[b * d_ + i];
  }
  for (auto it = enc_.rbegin(); it != enc_.rend(); ++it) dh = layer_backward(*it, dh, nullptr);
  for (std::size_t b = 0; b < batch_; ++b) {
    for (std::size_t i = 0; i < K_ * d_; ++i) pos_.grad[i] += dh[b * K_ * d_ + i];
  }
  embed_.backward(dh);
}

}  // namespace crashformer::eval
