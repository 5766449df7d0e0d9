#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "crashformer/calendar.hpp"
#include "crashformer/geoindex.hpp"
#include "crashformer/ingest.hpp"

namespace crashformer::featurize {

inline constexpr std::size_t kFeatureDim = 27;
inline constexpr auto kWindowLength = std::chrono::hours{6};
inline constexpr int kWindowsPerDay = 4;

/// Slot layout of a sequence feature vector.
namespace slot {
inline constexpr std::size_t kWeatherSeverity = 0;
inline constexpr std::size_t kPrecipitation = 1;
inline constexpr std::size_t kWeatherFlags = 2;  // rain, fog, cold, snow, storm, hail
inline constexpr std::size_t kPoi = 8;           // 13 flags, alphabetical
inline constexpr std::size_t kDayOfWeek = 21;
inline constexpr std::size_t kDayOfMonth = 22;
inline constexpr std::size_t kMonth = 23;
inline constexpr std::size_t kHoliday = 24;
inline constexpr std::size_t kAccidentSeverity = 25;
inline constexpr std::size_t kOccurred = 26;
}  // namespace slot

using SequenceFeature = std::array<double, kFeatureDim>;

struct TimeWindow {
  std::int64_t index = 0;
  CivilTime epoch{};

  CivilTime start() const { return epoch + kWindowLength * index; }
  CivilTime end() const { return start() + kWindowLength; }
};

/// Floor of (ts - epoch) / 6h. Throws ValidationError when ts precedes epoch.
TimeWindow window_index(CivilTime ts, CivilTime epoch);

/// Number of windows from the epoch's day through `last_day` inclusive.
std::int64_t windows_through(CivilTime epoch, std::chrono::year_month_day last_day);

struct TimeFeatures {
  int day_of_week = 0;  // Monday = 0
  int day_of_month = 1;
  int month = 1;
  bool is_holiday = false;
};

TimeFeatures time_features(const TimeWindow& w);

/// True when the event interval [start, end] overlaps the half-open window.
bool overlaps(const ingest::WeatherRecord& rec, const TimeWindow& w);

/// Aggregates the records of one (region, window) cell. `accidents` must
/// already be restricted to the cell; `weather` to the region's association
/// radius (overlap with `w` is checked here). Means are summed in ascending
/// value order so the result does not depend on record order.
SequenceFeature build_feature(const TimeWindow& w, std::span<const ingest::AccidentRecord> accidents,
                              std::span<const ingest::WeatherRecord> weather);

inline int label(std::span<const ingest::AccidentRecord> accidents_in_cell) {
  return accidents_in_cell.empty() ? 0 : 1;
}

struct FeaturizeConfig {
  double weather_radius_km = 30.0;
};

struct CityData {
  geo::HexGrid grid;
  CivilTime epoch{};
  std::int64_t n_windows = 0;
  std::vector<ingest::AccidentRecord> accidents;
  std::vector<ingest::WeatherRecord> weather;
};

/// Dense region x window x 27 table. Regions ascend by cell index.
struct FeatureTable {
  geo::LatLon grid_origin;
  CivilTime epoch{};
  std::int64_t n_windows = 0;
  std::vector<geo::RegionId> regions;
  std::vector<float> features;       // R * T * 27
  std::vector<std::uint8_t> labels;  // R * T

  std::size_t n_regions() const { return regions.size(); }
  std::span<const float, kFeatureDim> feature(std::size_t region, std::int64_t window) const {
    return std::span<const float, kFeatureDim>(
        features.data() + (region * static_cast<std::size_t>(n_windows) + static_cast<std::size_t>(window)) * kFeatureDim,
        kFeatureDim);
  }
  std::uint8_t label_at(std::size_t region, std::int64_t window) const {
    return labels[region * static_cast<std::size_t>(n_windows) + static_cast<std::size_t>(window)];
  }
  /// Index of `r` in `regions`, or -1.
  std::ptrdiff_t region_index(geo::RegionId r) const;
};

struct BuildStats {
  std::size_t accidents_used = 0;
  std::size_t accidents_outside_period = 0;
};

FeatureTable build_feature_table(const CityData& city, const FeaturizeConfig& cfg = {},
                                 BuildStats* stats = nullptr);

/// Binary round trip for the `featurize` CLI stage.
void write_feature_table(const FeatureTable& table, const std::string& dir);
FeatureTable read_feature_table(const std::string& dir);

}  // namespace crashformer::featurize
