#pragma once

#include <optional>
#include <string>
#include <vector>

#include "crashformer/dataset.hpp"
#include "crashformer/experiment.hpp"
#include "crashformer/model_config.hpp"
#include "crashformer/train.hpp"

namespace crashformer::config {

/// Version string echoed into every run directory.
std::string code_version();

struct Paths {
  std::string accidents = "accidents.csv";
  std::string weather = "weather.csv";
  std::string demographics = "demographics.csv";
  std::string tile_cache = "tiles";
  /// Feature table directory written by `featurize`; empty = featurize on the fly.
  std::string features;
  /// Dataset container directory written by `build-dataset`.
  std::string dataset;
  /// Model checkpoint written by `train`.
  std::string checkpoint;
};

struct GeoindexSection {
  /// Grid origin; unset = mean of accident coordinates.
  std::optional<double> origin_lat;
  std::optional<double> origin_lon;
  std::string tile_source = "https://tile.openstreetmap.org/{z}/{x}/{y}.png";
  std::string user_agent = "crashformer-research/0.1 (accident-risk tile cache)";
  double delay_seconds = 1.0;
};

struct FeaturizeSection {
  /// Inclusive study period (YYYY-MM-DD); unset = span of the accident records.
  std::optional<std::string> start_date;
  std::optional<std::string> end_date;
  double weather_radius_km = 30.0;
};

struct DatasetSection {
  dataset::SplitKind split = dataset::SplitKind::random;
  double train = 0.70;
  double val = 0.10;
  double test = 0.20;
  /// Temporal split: first test day; unset = the day at the train+val fraction.
  std::optional<std::string> cutoff_date;
  double region_fraction = 0.7;
  /// "auto" (inverse frequency), "published", or explicit {w0, w1}.
  std::string class_weights = "auto";
  std::optional<dataset::ClassWeights> explicit_weights;
  std::uint64_t seed = 0;
};

struct ExperimentSection {
  eval::ExperimentKind kind = eval::ExperimentKind::seq_sweep;
  std::vector<int> seq_lengths{4, 8, 12, 16};
};

struct RunConfig {
  Paths paths;
  GeoindexSection geoindex;
  FeaturizeSection featurize;
  DatasetSection dataset;
  model::ModelConfig model;
  train::TrainConfig train;
  ExperimentSection experiment;

  void validate() const;
  /// Weight override implied by dataset.class_weights.
  std::optional<dataset::ClassWeights> weight_override() const;
};

/// Parses a config document. Missing keys take defaults, unknown keys are a
/// ValidationError. Relative paths are resolved against `base_dir`.
RunConfig parse_config(const std::string& text, const std::string& base_dir = "");
RunConfig load_config(const std::string& path);

/// Applies `a.b.c=value` overrides; value is parsed as JSON, falling back to a
/// plain string.
RunConfig apply_overrides(const RunConfig& cfg, const std::vector<std::string>& overrides);

/// Sets the model, training and split seeds together.
void set_seed(RunConfig& cfg, std::uint64_t seed);

/// CRASHFORMER_CACHE, when set, replaces paths.tile_cache.
void apply_environment(RunConfig& cfg);

/// Canonical sorted-key JSON of the fully resolved config.
std::string to_json(const RunConfig& cfg);

/// Writes config.json and VERSION into dir.
void echo_config(const RunConfig& cfg, const std::string& dir);

}  // namespace crashformer::config
