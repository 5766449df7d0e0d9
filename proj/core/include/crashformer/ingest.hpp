#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "crashformer/calendar.hpp"
#include "crashformer/geoindex.hpp"

namespace crashformer::ingest {

inline constexpr std::size_t kPoiCount = 13;
inline constexpr std::size_t kDemoDim = 144;

/// Alphabetical order; also the column order of accidents.csv and the slot
/// order inside the sequence feature.
inline constexpr std::array<std::string_view, kPoiCount> kPoiNames = {
    "amenity",  "bump", "crossing", "give_way",        "junction",       "no_exit",     "railway",
    "roundabout", "station", "stop", "traffic_calming", "traffic_signal", "turning_loop"};

struct AccidentRecord {
  CivilTime timestamp{};
  double lat = 0.0;
  double lon = 0.0;
  double severity = 1.0;
  std::array<bool, kPoiCount> poi{};

  friend bool operator==(const AccidentRecord&, const AccidentRecord&) = default;
};

enum class WeatherKind { rain, fog, cold, snow, storm, hail, other };
inline constexpr std::size_t kWeatherFlagCount = 6;  // `other` carries no flag

std::string_view to_string(WeatherKind k);
WeatherKind parse_weather_kind(std::string_view s);

struct WeatherRecord {
  double station_lat = 0.0;
  double station_lon = 0.0;
  CivilTime start{};
  CivilTime end{};
  WeatherKind kind = WeatherKind::other;
  double severity = 1.0;
  double precipitation_mm = 0.0;

  friend bool operator==(const WeatherRecord&, const WeatherRecord&) = default;
};

struct DemographicRecord {
  std::string zip;
  double lat = 0.0;
  double lon = 0.0;
  /// Missing values are NaN.
  std::vector<double> features;
};

struct LoadReport {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::vector<std::string> diagnostics;
};

template <typename T>
struct Loaded {
  T records;
  LoadReport report;
};

/// Fraction of malformed rows above which a load fails outright.
inline constexpr double kMaxRejectedFraction = 0.01;

std::vector<std::string> accident_columns();
std::vector<std::string> weather_columns();
std::vector<std::string> demographic_columns();

Loaded<std::vector<AccidentRecord>> load_accidents(const std::string& path);
Loaded<std::vector<WeatherRecord>> load_weather(const std::string& path);
Loaded<std::map<std::string, DemographicRecord>> load_demographics(const std::string& path);

/// "Light"/"Moderate"/"Heavy"/"Severe" or a number in [1, 4].
double parse_weather_severity(std::string_view s);

std::vector<geo::ZipCentroid> zip_table(const std::map<std::string, DemographicRecord>& demo);

/// CSV writers used by the synthetic world; the inverse of the loaders.
void write_accidents(const std::string& path, const std::vector<AccidentRecord>& rows);
void write_weather(const std::string& path, const std::vector<WeatherRecord>& rows);
void write_demographics(const std::string& path, const std::vector<DemographicRecord>& rows);

}  // namespace crashformer::ingest
