#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "crashformer/featurize.hpp"
#include "crashformer/geoindex.hpp"
#include "crashformer/ingest.hpp"

namespace crashformer::dataset {

inline constexpr int kContainerVersion = 1;
inline constexpr std::size_t kDemoDim = ingest::kDemoDim;

struct Sample {
  geo::RegionId region;
  std::int64_t target_window = 0;
  /// K x 27, windows target-K ... target-1 in order.
  std::vector<float> history;
  std::uint32_t tile_ref = 0;
  std::vector<float> demo;
  std::uint8_t label = 0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

/// One sample per (region, window >= K), regions in table order, windows
/// ascending. `tile_ref` is the region's index in the table; `demo` is empty.
std::vector<Sample> assemble_samples(const featurize::FeatureTable& table, int K);

enum class SplitKind { random, temporal, spatial };
std::string to_string(SplitKind k);
SplitKind parse_split_kind(const std::string& s);

struct SplitSpec {
  SplitKind kind = SplitKind::random;
  double train = 0.70;
  double val = 0.10;
  double test = 0.20;
  /// Temporal: first window that belongs to the test side.
  std::int64_t cutoff_window = 0;
  /// Spatial: fraction of regions on the train/val side.
  double region_fraction = 0.7;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Sorted-key JSON form used in manifests and run provenance.
std::string to_json(const SplitSpec& s);
SplitSpec split_spec_from_json(const std::string& text);

enum class Part : std::uint8_t { train = 0, val = 1, test = 2 };

struct Split {
  /// One entry per sample.
  std::vector<Part> assignment;

  std::vector<std::size_t> indices(Part p) const;
};

/// Partitions samples; every kind yields disjoint, exhaustive, non-empty parts.
Split split(const std::vector<Sample>& samples, const SplitSpec& spec);

struct ClassWeights {
  double w0 = 1.0;
  double w1 = 1.0;

  friend bool operator==(const ClassWeights&, const ClassWeights&) = default;
};

/// Published empirical weights (label 1: 15.327, label 0: 0.516).
inline constexpr ClassWeights kPublishedClassWeights{0.516, 15.327};

/// Inverse-frequency weights w_c = N / (2 N_c).
ClassWeights class_weights(const std::vector<Sample>& samples, const std::vector<std::size_t>& train);

struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

/// Per-feature z-score with population mean/std over the training regions
/// (NaNs skipped). Zero-variance features and NaN inputs become 0.
NormalizationStats fit_normalization(const std::map<geo::RegionId, std::vector<double>>& raw,
                                     const std::vector<geo::RegionId>& train_regions);
std::vector<float> apply_normalization(const NormalizationStats& stats, const std::vector<double>& raw);

/// Resolves each table region to its nearest zip's raw demographic vector.
std::map<geo::RegionId, std::vector<double>> region_demographics(
    const geo::HexGrid& grid, const std::vector<geo::RegionId>& regions,
    const std::map<std::string, ingest::DemographicRecord>& demo);

struct TileShape {
  int height = 256;
  int width = 256;
  int channels = 3;
};

/// Everything a training run needs, as persisted on disk.
struct Container {
  int K = 4;
  std::vector<Sample> samples;
  Split split;
  SplitSpec split_spec;
  NormalizationStats normalization;
  ClassWeights class_weights;
  TileShape tile_shape;
  /// tile_ref -> (region, tile image path)
  std::vector<std::pair<geo::RegionId, std::string>> tiles;
  geo::LatLon grid_origin;
  std::string epoch;
};

/// Writes manifest.json, seq.f32, demo.f32, labels.u8, regions.u64,
/// windows.u32 and tiles.json into `dir`. Returns the manifest text.
std::string write_dataset(const Container& c, const std::string& dir);
Container read_dataset(const std::string& dir);

struct RegionRate {
  std::size_t samples = 0;
  std::size_t positives = 0;
  double rate = 0.0;
};

struct StatsReport {
  std::size_t samples = 0;
  std::size_t positives = 0;
  double positive_rate = 0.0;
  std::map<geo::RegionId, RegionRate> per_region;

  /// Positive rate in percent, rounded to two decimals (e.g. 3.67).
  double positive_percent_2dp() const;
};

StatsReport stats_report(const std::vector<Sample>& samples);
StatsReport stats_report(std::size_t samples, std::size_t positives);

/// Inputs shared by every dataset built from one city.
struct CityInputs {
  featurize::FeatureTable table;
  std::map<geo::RegionId, std::vector<double>> raw_demographics;
  std::vector<std::string> tile_paths;  // indexed like table.regions
};

/// assemble -> split -> class weights -> normalize on train-side regions.
/// `min_target_window` lets experiment arms with different K share targets.
Container build_container(const CityInputs& inputs, int K, const SplitSpec& spec,
                          std::optional<ClassWeights> weight_override = std::nullopt,
                          std::int64_t min_target_window = 0);

}  // namespace crashformer::dataset
