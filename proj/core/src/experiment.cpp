#include "crashformer/experiment.hpp"

#include <algorithm>
#include <filesystem>

#include <json.hpp>

#include "binary_io.hpp"
#include "crashformer/checkpoint.hpp"
#include "crashformer/error.hpp"
#include "crashformer/report.hpp"

namespace crashformer::eval {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::seq_sweep: return "seq_sweep";
    case ExperimentKind::ablation: return "ablation";
    case ExperimentKind::temporal: return "temporal";
    case ExperimentKind::spatial: return "spatial";
  }
  return "?";
}

ExperimentKind parse_experiment_kind(const std::string& s) {
  for (auto k : {ExperimentKind::seq_sweep, ExperimentKind::ablation, ExperimentKind::temporal, ExperimentKind::spatial}) {
    if (to_string(k) == s) return k;
  }
  throw ValidationError("unknown experiment kind '" + s + "' (expected seq_sweep, ablation, temporal or spatial)");
}

std::vector<ArmSpec> arms_for(ExperimentKind kind, int K, const std::vector<int>& seq_lengths) {
  std::vector<ArmSpec> arms;
  switch (kind) {
    case ExperimentKind::seq_sweep:
      if (seq_lengths.empty()) throw ValidationError("seq_sweep needs at least one history length");
      for (int k : seq_lengths) arms.push_back({"len" + std::to_string(k), "crashformer", k, true, true});
      break;
    case ExperimentKind::ablation:
      arms = {{"full", "crashformer", K, true, true},
              {"wo_img", "crashformer", K, false, true},
              {"wo_demo", "crashformer", K, true, false},
              {"wo_img_demo", "crashformer", K, false, false}};
      break;
    case ExperimentKind::temporal:
    case ExperimentKind::spatial:
      arms = {{"crashformer", "crashformer", K, true, true},
              {"dlinear", "dlinear", K, false, false},
              {"transformer", "transformer", K, false, false}};
      break;
  }
  return arms;
}

std::vector<Improvement> improvements_over_first(const std::vector<ArmResult>& arms) {
  std::vector<Improvement> out;
  for (std::size_t i = 1; i < arms.size(); ++i) {
    const double ref = arms[0].metrics.f1_1, other = arms[i].metrics.f1_1;
    out.push_back({arms[0].spec.name, arms[i].spec.name, ref, other, relative_improvement_percent(ref, other)});
  }
  return out;
}

namespace {

dataset::SplitSpec split_for(const ExperimentConfig& cfg) {
  auto s = cfg.split;
  if (cfg.kind == ExperimentKind::temporal) s.kind = dataset::SplitKind::temporal;
  if (cfg.kind == ExperimentKind::spatial) s.kind = dataset::SplitKind::spatial;
  return s;
}

bool needs_images(const std::vector<ArmSpec>& arms) {
  return std::any_of(arms.begin(), arms.end(), [](const ArmSpec& a) { return a.model_kind == "crashformer" && a.use_img; });
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg, const dataset::CityInputs& inputs,
                                const std::string& out_dir, const std::function<void(const std::string&)>& log) {
  const auto say = [&](const std::string& m) {
    if (log) log(m);
  };
  cfg.model.validate();
  cfg.train.validate();
  const auto arms = arms_for(cfg.kind, cfg.model.K, cfg.seq_lengths);
  const auto spec = split_for(cfg);
  spec.validate();

  int max_k = 0;
  for (const auto& a : arms) max_k = std::max(max_k, a.K);
  const std::int64_t min_target = cfg.kind == ExperimentKind::seq_sweep ? max_k : 0;

  ExperimentReport report;
  report.kind = cfg.kind;
  std::vector<dataset::Part> shared_assignment;
  json class_weights;

  // Containers depend only on K, so consecutive arms with the same K share one.
  int loaded_k = -1;
  dataset::Container data;
  train::ImageBank bank;
  for (const auto& arm : arms) {
    if (arm.K != loaded_k) {
      data = dataset::build_container(inputs, arm.K, spec, cfg.weight_override, min_target);
      bank = needs_images(arms) ? train::ImageBank::load(data, cfg.model.img_size) : train::ImageBank{};
      loaded_k = arm.K;
      if (shared_assignment.empty()) {
        shared_assignment = data.split.assignment;
        class_weights = {{"w0", data.class_weights.w0}, {"w1", data.class_weights.w1}};
      } else if (data.split.assignment != shared_assignment) {
        throw RuntimeFailure("experiment arms do not share one split");
      }
    }

    auto mcfg = cfg.model;
    mcfg.K = arm.K;
    mcfg.use_img = arm.use_img;
    mcfg.use_demo = arm.use_demo;
    if (mcfg.n_modes > mcfg.K / 2 + 1) mcfg.n_modes = mcfg.K / 2 + 1;
    auto model = model::make_classifier(arm.model_kind, mcfg);

    auto tcfg = cfg.train;
    tcfg.class_weights = data.class_weights;
    train::ClassifierTrainable trainable(*model, data, bank, data.class_weights);
    const auto train_idx = data.split.indices(dataset::Part::train);
    const auto val_idx = data.split.indices(dataset::Part::val);
    const auto test_idx = data.split.indices(dataset::Part::test);
    say("arm " + arm.name + ": " + std::to_string(train_idx.size()) + " train / " + std::to_string(val_idx.size()) +
        " val / " + std::to_string(test_idx.size()) + " test samples");
    const auto result = train::train_loop(trainable, train_idx, val_idx, tcfg, [&](const train::EpochRecord& e) {
      say("  " + arm.name + " epoch " + std::to_string(e.epoch) + " train " + std::to_string(e.train_loss) + " val " +
          std::to_string(e.val_loss) + " lr " + std::to_string(e.lr));
    });

    const auto probs = train::predict_probs(*model, data, bank, test_idx);
    std::vector<std::uint8_t> labels;
    labels.reserve(test_idx.size());
    for (auto i : test_idx) labels.push_back(data.samples[i].label);

    const auto arm_dir = fs::path(out_dir) / "arms" / arm.name;
    fs::create_directories(arm_dir);
    std::vector<float> p32(probs.values().begin(), probs.values().end());
    bin::write_array<float>((arm_dir / "preds.f32").string(), p32);
    bin::write_array<std::uint8_t>((arm_dir / "labels.u8").string(), labels);
    bin::write_text((arm_dir / "history.jsonl").string(), result.history.to_jsonl());
    model::save_checkpoint(*model, (arm_dir / "checkpoint.bin").string());

    ArmResult r;
    r.spec = arm;
    // Scored from the stored dump so the report matches what `report` recomputes.
    r.metrics = metrics_from_dump(arm_dir.string());
    r.best_epoch = result.history.best_epoch;
    r.epochs_run = static_cast<int>(result.history.epochs.size());
    r.best_val_loss = result.history.best_val_loss;
    say("arm " + arm.name + ": f1_1 " + std::to_string(r.metrics.f1_1) + " f1_0 " + std::to_string(r.metrics.f1_0));
    report.arms.push_back(r);
  }
  report.improvements = improvements_over_first(report.arms);

  json prov;
  prov["kind"] = to_string(cfg.kind);
  prov["seed"] = cfg.train.seed;
  prov["split"] = json::parse(dataset::to_json(spec));
  prov["model"] = json::parse(model::to_json(cfg.model));
  prov["train"] = json::parse(train::to_json(cfg.train));
  prov["class_weights"] = class_weights;
  prov["seq_lengths"] = cfg.seq_lengths;
  report.provenance = prov.dump();
  return report;
}

}  // namespace crashformer::eval
