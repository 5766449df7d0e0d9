#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "crashformer/calendar.hpp"
#include "crashformer/geoindex.hpp"

namespace crashformer::synth {

struct Signal {
  double w_hist = 0.0;
  double w_weather = 0.0;
  double w_demo = 0.0;
  double w_img = 0.0;
};

struct WorldConfig {
  int n_regions = 50;
  int n_days = 120;
  std::uint64_t seed = 1;
  double base_rate = 0.05;
  Signal signal;
  geo::LatLon bbox_min{29.55, -95.65};
  geo::LatLon bbox_max{30.05, -95.10};
  std::string start_date = "2021-01-01";
  /// Line segments drawn on a tile with road density 1.
  int max_lines = 48;

  void validate() const;
};

/// Generator bookkeeping, also persisted as world.json.
struct World {
  geo::LatLon origin;
  CivilTime epoch{};
  std::int64_t n_windows = 0;
  std::vector<geo::RegionId> regions;  // ascending cell index
  std::vector<double> risk;            // demographic feature f000
  std::vector<double> road_density;    // lines / max_lines
  std::vector<int> lines;
  std::vector<std::string> zips;
  std::vector<double> probability;   // R x T
  std::vector<std::uint8_t> label;   // R x T
  std::size_t accidents = 0;

  double p(std::size_t region, std::int64_t w) const {
    return probability[region * static_cast<std::size_t>(n_windows) + static_cast<std::size_t>(w)];
  }
};

/// Writes accidents.csv, weather.csv, demographics.csv, the tile cache under
/// tiles/, truth.json, world.json and a ready-to-use config.json into out_dir.
World generate_world(const WorldConfig& cfg, const std::string& out_dir);

struct BayesReport {
  std::size_t n = 0;
  double expected_positives = 0.0;
  /// Expected-count F1_1 of predicting 1 iff p > 0.5.
  double argmax_f1_1 = 0.0;
  /// Best expected-count F1_1 over all thresholds on p; the upper bound used
  /// in learnability checks.
  double best_f1_1 = 0.0;
  double best_threshold = 1.0;
};

/// F1 from expected counts: 2 E[TP] / (2 E[TP] + E[FP] + E[FN]).
BayesReport bayes_report(std::span<const double> probabilities);

/// Reads out_dir/truth.json and reports over every (region, window).
BayesReport world_oracle(const std::string& out_dir);

/// truth.json content: region -> per-window probabilities.
std::vector<std::pair<geo::RegionId, std::vector<double>>> read_truth(const std::string& out_dir);

}  // namespace crashformer::synth
