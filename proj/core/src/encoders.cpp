#include "crashformer/encoders.hpp"

#include "crashformer/error.hpp"
#include "crashformer/featurize.hpp"
#include "crashformer/ingest.hpp"

namespace crashformer::model {

using nn::Conv2d;

namespace {

Tensor seasonal(const Tensor& x, int kernel) { return nn::sub(x, nn::moving_average(x, kernel)); }

Tensor seasonal_adjoint(const Tensor& dy, int kernel) { return nn::sub(dy, nn::moving_average_adjoint(dy, kernel)); }

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

}  // namespace

// ---------------------------------------------------------------- sequence

SeqEncoder::SeqEncoder(const ModelConfig& cfg, Rng& rng)
    : K_(sz(cfg.K)),
      d_(sz(cfg.d_model)),
      kernel_(cfg.decomp_kernel),
      embed_("seq.embed", featurize::kFeatureDim, d_, rng),
      pos_("seq.pos", {K_, d_}) {
  for (auto& v : pos_.value.values()) v = 0.02 * rng.normal();
  for (int i = 0; i < cfg.n_enc_layers; ++i) {
    const std::string p = "seq.layers." + std::to_string(i);
    layers_.push_back(Layer{nn::FourierBlock(p + ".feb", d_, K_, sz(cfg.n_modes), rng),
                            nn::Linear(p + ".ff1", d_, sz(cfg.d_ff), rng), nn::Gelu{}, nn::Dropout(cfg.dropout),
                            nn::Linear(p + ".ff2", sz(cfg.d_ff), d_, rng)});
  }
  out_ = nn::Linear("seq.out", K_ * d_, sz(cfg.seq_out), rng);
}

void SeqEncoder::collect(nn::ParamList& out) {
  embed_.collect(out);
  out.push_back(&pos_);
  for (auto& l : layers_) {
    l.feb.collect(out);
    l.ff1.collect(out);
    l.ff2.collect(out);
  }
  out_.collect(out);
}

Tensor SeqEncoder::forward(const Tensor& history, bool training, Rng& rng) {
  nn::expect_shape(history, {0, K_, featurize::kFeatureDim}, "history");
  const std::size_t B = history.dim(0);
  Tensor h = embed_.forward(history);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < K_ * d_; ++i) h[b * K_ * d_ + i] += pos_.value[i];
  }
  for (auto& l : layers_) {
    const Tensor s1 = seasonal(nn::add(h, l.feb.forward(h)), kernel_);
    const Tensor f = l.ff2.forward(l.drop.forward(l.act.forward(l.ff1.forward(s1)), training, rng));
    h = seasonal(nn::add(s1, f), kernel_);
  }
  h.reshape({B, K_ * d_});
  return out_.forward(h);
}

Tensor SeqEncoder::backward(const Tensor& dy) {
  const std::size_t B = dy.dim(0);
  Tensor dh = out_.backward(dy);
  dh.reshape({B, K_, d_});
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    const Tensor db = seasonal_adjoint(dh, kernel_);
    Tensor ds1 = it->ff1.backward(it->act.backward(it->drop.backward(it->ff2.backward(db))));
    nn::add_inplace(ds1, db);
    const Tensor da = seasonal_adjoint(ds1, kernel_);
    dh = nn::add(da, it->feb.backward(da));
  }
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < K_ * d_; ++i) pos_.grad[i] += dh[b * K_ * d_ + i];
  }
  return embed_.backward(dh);
}

// ---------------------------------------------------------------- image

LargeKernelAttention::LargeKernelAttention(const std::string& name, std::size_t channels, Rng& rng)
    : conv0(name + ".conv0", channels, channels, Conv2d::Options{5, 1, 2, 1, channels}, rng),
      conv_spatial(name + ".conv_spatial", channels, channels, Conv2d::Options{7, 1, 9, 3, channels}, rng),
      conv1(name + ".conv1", channels, channels, Conv2d::Options{}, rng) {}

void LargeKernelAttention::collect(nn::ParamList& out) {
  conv0.collect(out);
  conv_spatial.collect(out);
  conv1.collect(out);
}

void LargeKernelAttention::set_identity() {
  conv0.set_identity();
  conv_spatial.set_identity();
  conv1.set_identity();
}

Tensor LargeKernelAttention::forward(const Tensor& x) {
  nn::expect_shape(x, {0, conv0.weight.value.dim(0), 0, 0}, "LargeKernelAttention");
  input_ = x;
  attn_ = conv1.forward(conv_spatial.forward(conv0.forward(x)));
  return nn::mul(attn_, x);
}

Tensor LargeKernelAttention::backward(const Tensor& dy) {
  Tensor dx = conv0.backward(conv_spatial.backward(conv1.backward(nn::mul(dy, input_))));
  nn::add_inplace(dx, nn::mul(dy, attn_));
  return dx;
}

ImageEncoder::ImageEncoder(const ModelConfig& cfg, Rng& rng) : size_(sz(cfg.img_size)) {
  std::size_t cin = 3;
  for (std::size_t s = 0; s < cfg.img_channels.size(); ++s) {
    const std::size_t c = sz(cfg.img_channels[s]);
    const std::string p = "img.stages." + std::to_string(s);
    const Conv2d::Options patch_opts = s == 0 ? Conv2d::Options{7, 4, 3, 1, 1} : Conv2d::Options{3, 2, 1, 1, 1};
    stages_.push_back(Stage{
        Conv2d(p + ".patch", cin, c, patch_opts, rng),
        nn::ChannelNorm(p + ".patch_norm", c),
        Block{nn::ChannelNorm(p + ".norm1", c), Conv2d(p + ".proj1", c, c, {}, rng), nn::Gelu{},
              LargeKernelAttention(p + ".lka", c, rng), Conv2d(p + ".proj2", c, c, {}, rng),
              nn::ChannelNorm(p + ".norm2", c), Conv2d(p + ".fc1", c, 2 * c, {}, rng), nn::Gelu{},
              Conv2d(p + ".fc2", 2 * c, c, {}, rng)}});
    cin = c;
  }
  final_norm_ = nn::ChannelNorm("img.norm", cin);
  head_ = nn::Linear("img.head", cin, sz(cfg.img_out), rng);
}

void ImageEncoder::collect(nn::ParamList& out) {
  for (auto& s : stages_) {
    s.patch.collect(out);
    s.patch_norm.collect(out);
    auto& b = s.block;
    b.norm1.collect(out);
    b.proj1.collect(out);
    b.lka.collect(out);
    b.proj2.collect(out);
    b.norm2.collect(out);
    b.fc1.collect(out);
    b.fc2.collect(out);
  }
  final_norm_.collect(out);
  head_.collect(out);
}

Tensor ImageEncoder::forward(const Tensor& images) {
  nn::expect_shape(images, {0, 3, size_, size_}, "tile batch");
  Tensor x = images;
  for (auto& s : stages_) {
    x = s.patch_norm.forward(s.patch.forward(x));
    auto& b = s.block;
    x = nn::add(x, b.proj2.forward(b.lka.forward(b.act1.forward(b.proj1.forward(b.norm1.forward(x))))));
    x = nn::add(x, b.fc2.forward(b.act2.forward(b.fc1.forward(b.norm2.forward(x)))));
  }
  x = final_norm_.forward(x);
  pooled_shape_ = x.shape();
  const std::size_t U = x.dim(0), C = x.dim(1), P = x.dim(2) * x.dim(3);
  Tensor pooled({U, C});
  for (std::size_t u = 0; u < U; ++u) {
    for (std::size_t c = 0; c < C; ++c) {
      double acc = 0.0;
      const double* p = x.data() + (u * C + c) * P;
      for (std::size_t i = 0; i < P; ++i) acc += p[i];
      pooled[u * C + c] = acc / static_cast<double>(P);
    }
  }
  return head_.forward(pooled);
}

Tensor ImageEncoder::backward(const Tensor& dy) {
  const Tensor dpooled = head_.backward(dy);
  Tensor dx(pooled_shape_);
  const std::size_t U = dx.dim(0), C = dx.dim(1), P = dx.dim(2) * dx.dim(3);
  for (std::size_t u = 0; u < U; ++u) {
    for (std::size_t c = 0; c < C; ++c) {
      const double g = dpooled[u * C + c] / static_cast<double>(P);
      double* p = dx.data() + (u * C + c) * P;
      for (std::size_t i = 0; i < P; ++i) p[i] = g;
    }
  }
  dx = final_norm_.backward(dx);
  for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) {
    auto& b = it->block;
    nn::add_inplace(dx, b.norm2.backward(b.fc1.backward(b.act2.backward(b.fc2.backward(dx)))));
    nn::add_inplace(dx, b.norm1.backward(b.proj1.backward(b.act1.backward(b.lka.backward(b.proj2.backward(dx))))));
    dx = it->patch.backward(it->patch_norm.backward(dx));
  }
  return dx;
}

// ---------------------------------------------------------------- demographics and head

DemoEncoder::DemoEncoder(const ModelConfig& cfg, Rng& rng)
    : fc1("demo.fc1", ingest::kDemoDim, sz(cfg.demo_hidden), rng),
      fc2("demo.fc2", sz(cfg.demo_hidden), sz(cfg.demo_out), rng) {}

void DemoEncoder::collect(nn::ParamList& out) {
  fc1.collect(out);
  fc2.collect(out);
}

Tensor DemoEncoder::forward(const Tensor& demo) {
  nn::expect_shape(demo, {0, ingest::kDemoDim}, "demographics");
  return fc2.forward(act_.forward(fc1.forward(demo)));
}

Tensor DemoEncoder::backward(const Tensor& dy) { return fc1.backward(act_.backward(fc2.backward(dy))); }

ClassifierHead::ClassifierHead(const ModelConfig& cfg, Rng& rng)
    : fc1("head.fc1", sz(cfg.seq_out + cfg.img_out + cfg.demo_out), sz(cfg.clf_hidden), rng),
      fc2("head.fc2", sz(cfg.clf_hidden), 2, rng),
      drop_(cfg.dropout) {}

void ClassifierHead::collect(nn::ParamList& out) {
  fc1.collect(out);
  fc2.collect(out);
}

Tensor ClassifierHead::forward(const Tensor& fused, bool training, Rng& rng) {
  nn::expect_shape(fused, {0, fc1.in_features()}, "fused latent");
  return fc2.forward(drop_.forward(act_.forward(fc1.forward(fused)), training, rng));
}

Tensor ClassifierHead::backward(const Tensor& dy) {
  return fc1.backward(act_.backward(drop_.backward(fc2.backward(dy))));
}

Tensor fuse(const Tensor& seq, const Tensor& img, const Tensor& demo) {
  if (seq.rank() != 2 || img.rank() != 2 || demo.rank() != 2) throw ValidationError("fuse expects 2-D latents");
  const std::size_t B = seq.dim(0);
  if (img.dim(0) != B || demo.dim(0) != B) {
    throw ValidationError("fuse: batch mismatch " + nn::shape_str(seq.shape()) + ", " + nn::shape_str(img.shape()) +
                          ", " + nn::shape_str(demo.shape()));
  }
  const std::size_t a = seq.dim(1), c = img.dim(1), e = demo.dim(1);
  Tensor out({B, a + c + e});
  for (std::size_t b = 0; b < B; ++b) {
    double* dst = out.data() + b * (a + c + e);
    std::copy_n(seq.data() + b * a, a, dst);
    std::copy_n(img.data() + b * c, c, dst + a);
    std::copy_n(demo.data() + b * e, e, dst + a + c);
  }
  return out;
}

}  // namespace crashformer::model
