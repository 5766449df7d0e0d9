#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "crashformer/dataset.hpp"
#include "crashformer/metrics.hpp"
#include "crashformer/model_config.hpp"
#include "crashformer/train.hpp"

namespace crashformer::eval {

enum class ExperimentKind { seq_sweep, ablation, temporal, spatial };
std::string to_string(ExperimentKind k);
ExperimentKind parse_experiment_kind(const std::string& s);

struct ArmSpec {
  std::string name;
  std::string model_kind;  // crashformer, dlinear, transformer
  int K = 4;
  bool use_img = true;
  bool use_demo = true;
};

/// Arms of each protocol; the first arm is the reference for improvements.
std::vector<ArmSpec> arms_for(ExperimentKind kind, int K, const std::vector<int>& seq_lengths);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::seq_sweep;
  model::ModelConfig model;
  train::TrainConfig train;
  /// Split used by seq_sweep and ablation; temporal and spatial runs take the
  /// cutoff / region fraction from here but force the matching kind.
  dataset::SplitSpec split;
  std::optional<dataset::ClassWeights> weight_override;
  std::vector<int> seq_lengths{4, 8, 12, 16};
};

struct ArmResult {
  ArmSpec spec;
  Metrics metrics;
  int best_epoch = 0;
  int epochs_run = 0;
  double best_val_loss = 0.0;
};

struct Improvement {
  std::string reference;
  std::string arm;
  double reference_f1_1 = 0.0;
  double arm_f1_1 = 0.0;
  double percent = 0.0;
};

struct ExperimentReport {
  ExperimentKind kind = ExperimentKind::seq_sweep;
  std::vector<ArmResult> arms;
  std::vector<Improvement> improvements;
  /// Sorted-key JSON: seed, split spec, model and train config, class weights.
  std::string provenance;
};

/// Relative F1_1 gain of arms[0] over each later arm.
std::vector<Improvement> improvements_over_first(const std::vector<ArmResult>& arms);

/// Trains and tests every arm of `cfg.kind` on one city and writes per-arm
/// prediction dumps (preds.f32, labels.u8), histories and checkpoints under
/// out_dir/arms/<name>/. Report files are written by write_report.
ExperimentReport run_experiment(const ExperimentConfig& cfg, const dataset::CityInputs& inputs,
                                const std::string& out_dir,
                                const std::function<void(const std::string&)>& log = {});

}  // namespace crashformer::eval
