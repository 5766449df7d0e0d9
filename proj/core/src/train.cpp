#include "crashformer/train.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>

#include <json.hpp>

#include "crashformer/error.hpp"
#include "crashformer/png_io.hpp"
#include "crashformer/random.hpp"

namespace crashformer::train {

void TrainConfig::validate() const {
  const auto fail = [](const std::string& m) { throw ValidationError("train config: " + m); };
  if (max_epochs < 1) fail("max_epochs must be >= 1");
  if (early_stop_patience < 1 || lr_patience < 1) fail("patiences must be >= 1");
  if (!(lr_factor > 0.0 && lr_factor < 1.0)) fail("lr_factor must lie in (0, 1)");
  if (!(lr_min > 0.0 && lr_min < lr_init)) fail("lr_min must be positive and below lr_init");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(class_weights.w0 > 0.0 && class_weights.w1 > 0.0)) fail("class weights must be positive");
  if (grad_clip < 0.0 || min_improvement < 0.0) fail("grad_clip and min_improvement must be >= 0");
}

std::string to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["max_epochs"] = c.max_epochs;
  j["early_stop_patience"] = c.early_stop_patience;
  j["lr_init"] = c.lr_init;
  j["lr_factor"] = c.lr_factor;
  j["lr_patience"] = c.lr_patience;
  j["lr_min"] = c.lr_min;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["class_weights"] = {{"w0", c.class_weights.w0}, {"w1", c.class_weights.w1}};
  j["grad_clip"] = c.grad_clip;
  j["min_improvement"] = c.min_improvement;
  return j.dump();
}

std::string TrainHistory::to_jsonl() const {
  std::string out;
  for (const auto& e : epochs) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["train_loss"] = e.train_loss;
    j["val_loss"] = e.val_loss;
    j["lr"] = e.lr;
    j["best"] = e.epoch == best_epoch;
    out += j.dump() + "\n";
  }
  return out;
}

PlateauState lr_step(PlateauState s, bool improved, const TrainConfig& cfg) {
  if (improved) {
    s.epochs_without_improvement = 0;
    return s;
  }
  if (++s.epochs_without_improvement >= cfg.lr_patience) {
    s.lr = std::max(s.lr * cfg.lr_factor, cfg.lr_min);
    s.epochs_without_improvement = 0;
  }
  return s;
}

bool early_stop(const std::vector<double>& val_losses, const TrainConfig& cfg) {
  if (val_losses.empty()) return false;
  double best = val_losses.front();
  int since = 0;
  for (std::size_t i = 1; i < val_losses.size(); ++i) {
    if (val_losses[i] <= best - cfg.min_improvement) {
      best = val_losses[i];
      since = 0;
    } else {
      ++since;
    }
  }
  return since >= cfg.early_stop_patience;
}

Adam::Adam(nn::ParamList params, double beta1, double beta2, double eps)
    : params_(std::move(params)), b1_(beta1), b2_(beta2), eps_(eps) {
  for (const auto* p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = *params_[i];
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      m[j] = b1_ * m[j] + (1.0 - b1_) * g;
      v[j] = b2_ * v[j] + (1.0 - b2_) * g * g;
      p.value[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

double clip_grad_norm(const nn::ParamList& params, double max_norm) {
  double sq = 0.0;
  for (const auto* p : params) {
    for (double g : p->grad.values()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto* p : params) {
      for (auto& g : p->grad.values()) g *= scale;
    }
  }
  return norm;
}

TrainResult train_loop(Trainable& t, std::vector<std::size_t> train_idx, const std::vector<std::size_t>& val_idx,
                       const TrainConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch) {
  cfg.validate();
  if (train_idx.empty() || val_idx.empty()) throw ValidationError("training needs non-empty train and validation sets");
  const auto params = t.parameters();
  Adam adam(params);
  Rng rng(cfg.seed);
  PlateauState plateau{cfg.lr_init, 0};
  TrainResult result;
  std::vector<double> val_losses;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    rng.shuffle(train_idx);
    double loss_sum = 0.0;
    int batch_no = 0;
    for (std::size_t start = 0; start < train_idx.size(); start += cfg.batch_size, ++batch_no) {
      const std::size_t n = std::min(cfg.batch_size, train_idx.size() - start);
      for (auto* p : params) p->grad.zero();
      const double loss = t.train_batch(std::span<const std::size_t>(train_idx).subspan(start, n));
      if (!std::isfinite(loss)) {
        throw RuntimeFailure("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_no));
      }
      clip_grad_norm(params, cfg.grad_clip);
      adam.step(plateau.lr);
      loss_sum += loss * static_cast<double>(n);
    }
    const double val = t.evaluate(val_idx);
    if (!std::isfinite(val)) throw RuntimeFailure("non-finite validation loss at epoch " + std::to_string(epoch));

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train_idx.size());
    rec.val_loss = val;
    rec.lr = plateau.lr;
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const bool improved = epoch == 1 || val <= result.history.best_val_loss - cfg.min_improvement;
    if (improved) {
      result.history.best_epoch = epoch;
      result.history.best_val_loss = val;
      result.best = model::snapshot(params);
    }
    result.history.epochs.push_back(rec);
    val_losses.push_back(val);
    if (on_epoch) on_epoch(rec);

    plateau = lr_step(plateau, improved, cfg);
    if (early_stop(val_losses, cfg)) break;
  }
  model::restore(params, result.best);
  return result;
}

// ---------------------------------------------------------------- data plumbing

ImageBank ImageBank::load(const dataset::Container& c, int img_size) {
  ImageBank bank;
  bank.size_ = img_size;
  for (const auto& [region, path] : c.tiles) {
    if (path.empty() || !std::filesystem::exists(path)) {
      throw RuntimeFailure("tile image for region " + region.str() + " not found at '" + path + "'");
    }
    bank.planes_.push_back(model::image_planes(read_png(path), img_size));
  }
  return bank;
}

model::Batch make_batch(const dataset::Container& c, const ImageBank& bank, std::span<const std::size_t> indices) {
  const std::size_t B = indices.size();
  const auto K = static_cast<std::size_t>(c.K);
  const std::size_t row = K * featurize::kFeatureDim;
  model::Batch b;
  b.history = nn::Tensor({B, K, featurize::kFeatureDim});
  b.demo = nn::Tensor({B, dataset::kDemoDim});
  b.labels.reserve(B);
  std::map<std::uint32_t, std::size_t> slot;
  for (std::size_t i = 0; i < B; ++i) {
    const auto& s = c.samples.at(indices[i]);
    if (s.history.size() != row) throw ValidationError("sample history has the wrong length");
    std::copy(s.history.begin(), s.history.end(), b.history.data() + i * row);
    if (s.demo.size() != dataset::kDemoDim) throw ValidationError("sample demographics have the wrong length");
    std::copy(s.demo.begin(), s.demo.end(), b.demo.data() + i * dataset::kDemoDim);
    b.labels.push_back(s.label);
    if (!bank.empty()) {
      const auto [it, fresh] = slot.try_emplace(s.tile_ref, slot.size());
      b.image_index.push_back(it->second);
    }
  }
  if (!bank.empty()) {
    const auto S = static_cast<std::size_t>(bank.size());
    b.images = nn::Tensor({slot.size(), 3, S, S});
    for (const auto& [ref, pos] : slot) {
      const auto& planes = bank.planes(ref);
      std::copy(planes.begin(), planes.end(), b.images.data() + pos * 3 * S * S);
    }
  }
  return b;
}

ClassifierTrainable::ClassifierTrainable(model::Classifier& m, const dataset::Container& c, const ImageBank& bank,
                                         dataset::ClassWeights w, std::size_t eval_batch)
    : model_(m), data_(c), bank_(bank), weights_(w), eval_batch_(eval_batch) {}

double ClassifierTrainable::train_batch(std::span<const std::size_t> indices) {
  const auto batch = make_batch(data_, bank_, indices);
  auto r = model::weighted_ce(model_.forward(batch, true), batch.labels, weights_);
  model_.backward(r.dlogits);
  return r.loss;
}

double ClassifierTrainable::evaluate(std::span<const std::size_t> indices) {
  double sum = 0.0;
  for (std::size_t start = 0; start < indices.size(); start += eval_batch_) {
    const std::size_t n = std::min(eval_batch_, indices.size() - start);
    const auto batch = make_batch(data_, bank_, indices.subspan(start, n));
    sum += model::weighted_ce(model_.forward(batch, false), batch.labels, weights_).loss * static_cast<double>(n);
  }
  return sum / static_cast<double>(indices.size());
}

nn::Tensor predict_probs(model::Classifier& m, const dataset::Container& c, const ImageBank& bank,
                         std::span<const std::size_t> indices, std::size_t batch_size) {
  nn::Tensor out({indices.size(), 2});
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, indices.size() - start);
    const auto probs = m.predict(make_batch(c, bank, indices.subspan(start, n))).probs;
    std::copy_n(probs.data(), 2 * n, out.data() + 2 * start);
  }
  return out;
}

}  // namespace crashformer::train
