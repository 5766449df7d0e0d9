#include "crashformer/featurize.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "binary_io.hpp"
#include "crashformer/error.hpp"

namespace crashformer::featurize {

using namespace std::chrono;

namespace {

double sorted_mean(std::vector<double>& values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

std::size_t weather_flag_slot(ingest::WeatherKind k) {
  return slot::kWeatherFlags + static_cast<std::size_t>(k);
}

}  // namespace

TimeWindow window_index(CivilTime ts, CivilTime epoch) {
  if (ts < epoch) {
    throw ValidationError("timestamp " + format_datetime(ts) + " precedes epoch " + format_datetime(epoch));
  }
  return TimeWindow{(ts - epoch) / kWindowLength, epoch};
}

std::int64_t windows_through(CivilTime epoch, year_month_day last_day) {
  const auto first = floor<days>(epoch);
  const auto end = sys_days{last_day} + days{1};
  if (end <= first) throw ValidationError("study end precedes epoch");
  return (end - first).count() * kWindowsPerDay;
}

TimeFeatures time_features(const TimeWindow& w) {
  const auto d = civil_date(w.start());
  return TimeFeatures{day_of_week(d), static_cast<int>(static_cast<unsigned>(d.day())),
                      static_cast<int>(static_cast<unsigned>(d.month())), is_us_federal_holiday(d)};
}

bool overlaps(const ingest::WeatherRecord& rec, const TimeWindow& w) {
  return rec.start < w.end() && rec.end >= w.start();
}

SequenceFeature build_feature(const TimeWindow& w, std::span<const ingest::AccidentRecord> accidents,
                              std::span<const ingest::WeatherRecord> weather) {
  SequenceFeature f{};
  std::vector<double> severities;
  std::vector<double> precipitation;
  for (const auto& rec : weather) {
    if (!overlaps(rec, w)) continue;
    severities.push_back(rec.severity);
    precipitation.push_back(rec.precipitation_mm);
    if (rec.kind != ingest::WeatherKind::other) f[weather_flag_slot(rec.kind)] = 1.0;
  }
  f[slot::kWeatherSeverity] = sorted_mean(severities);
  f[slot::kPrecipitation] = sorted_mean(precipitation);

  severities.clear();
  for (const auto& acc : accidents) {
    severities.push_back(acc.severity);
    for (std::size_t i = 0; i < ingest::kPoiCount; ++i) {
      if (acc.poi[i]) f[slot::kPoi + i] = 1.0;
    }
  }
  f[slot::kAccidentSeverity] = sorted_mean(severities);
  f[slot::kOccurred] = accidents.empty() ? 0.0 : 1.0;

  const auto tf = time_features(w);
  f[slot::kDayOfWeek] = tf.day_of_week / 6.0;
  f[slot::kDayOfMonth] = tf.day_of_month / 31.0;
  f[slot::kMonth] = tf.month / 12.0;
  f[slot::kHoliday] = tf.is_holiday ? 1.0 : 0.0;
  return f;
}

std::ptrdiff_t FeatureTable::region_index(geo::RegionId r) const {
  const auto it = std::lower_bound(regions.begin(), regions.end(), r);
  if (it == regions.end() || *it != r) return -1;
  return it - regions.begin();
}

FeatureTable build_feature_table(const CityData& city, const FeaturizeConfig& cfg, BuildStats* stats) {
  if (city.n_windows <= 0) throw ValidationError("study period has no windows");
  const CivilTime period_end = city.epoch + kWindowLength * city.n_windows;

  struct Located {
    geo::RegionId region;
    std::int64_t window;
    std::size_t index;
  };
  std::vector<Located> located;
  located.reserve(city.accidents.size());
  BuildStats local;
  for (std::size_t i = 0; i < city.accidents.size(); ++i) {
    const auto& a = city.accidents[i];
    if (a.timestamp < city.epoch || a.timestamp >= period_end) {
      ++local.accidents_outside_period;
      continue;
    }
    located.push_back({city.grid.locate_region(a.lat, a.lon), window_index(a.timestamp, city.epoch).index, i});
  }
  local.accidents_used = located.size();
  if (stats) *stats = local;
  if (located.empty()) throw ValidationError("no accidents inside the study period");

  FeatureTable table;
  table.grid_origin = city.grid.origin();
  table.epoch = city.epoch;
  table.n_windows = city.n_windows;
  for (const auto& l : located) table.regions.push_back(l.region);
  std::sort(table.regions.begin(), table.regions.end());
  table.regions.erase(std::unique(table.regions.begin(), table.regions.end()), table.regions.end());

  const std::size_t R = table.regions.size();
  const auto T = static_cast<std::size_t>(city.n_windows);
  table.features.assign(R * T * kFeatureDim, 0.0f);
  table.labels.assign(R * T, 0);

  // Bucket accidents per (region, window), keeping input order inside a cell.
  std::vector<std::vector<std::size_t>> cell_of(R * T);
  for (const auto& l : located) {
    const auto r = static_cast<std::size_t>(table.region_index(l.region));
    cell_of[r * T + static_cast<std::size_t>(l.window)].push_back(l.index);
  }

  std::vector<ingest::AccidentRecord> cell_accidents;
  std::vector<ingest::WeatherRecord> cell_weather;
  for (std::size_t r = 0; r < R; ++r) {
    const auto center = city.grid.region_center(table.regions[r]);
    std::vector<std::vector<std::size_t>> weather_of(T);
    for (std::size_t i = 0; i < city.weather.size(); ++i) {
      const auto& wr = city.weather[i];
      if (geo::haversine_km(center, {wr.station_lat, wr.station_lon}) > cfg.weather_radius_km) continue;
      if (wr.end < city.epoch || wr.start >= period_end) continue;
      const std::int64_t first = wr.start < city.epoch ? 0 : window_index(wr.start, city.epoch).index;
      const std::int64_t last = std::min<std::int64_t>(window_index(wr.end, city.epoch).index, city.n_windows - 1);
      for (std::int64_t w = first; w <= last; ++w) weather_of[static_cast<std::size_t>(w)].push_back(i);
    }
    for (std::size_t w = 0; w < T; ++w) {
      cell_accidents.clear();
      for (auto i : cell_of[r * T + w]) cell_accidents.push_back(city.accidents[i]);
      cell_weather.clear();
      for (auto i : weather_of[w]) cell_weather.push_back(city.weather[i]);
      const TimeWindow tw{static_cast<std::int64_t>(w), city.epoch};
      const auto f = build_feature(tw, cell_accidents, cell_weather);
      float* dst = table.features.data() + (r * T + w) * kFeatureDim;
      for (std::size_t k = 0; k < kFeatureDim; ++k) dst[k] = static_cast<float>(f[k]);
      table.labels[r * T + w] = static_cast<std::uint8_t>(label(cell_accidents));
    }
  }
  return table;
}

void write_feature_table(const FeatureTable& table, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json meta;
  meta["version"] = 1;
  meta["epoch"] = format_datetime(table.epoch);
  meta["n_windows"] = table.n_windows;
  meta["n_regions"] = table.regions.size();
  meta["n_features"] = kFeatureDim;
  meta["grid_origin"] = {table.grid_origin.lat, table.grid_origin.lon};
  std::vector<std::string> regions;
  for (auto r : table.regions) regions.push_back(r.str());
  meta["regions"] = regions;
  bin::write_text((fs::path(dir) / "table.json").string(), meta.dump(2) + "\n");
  bin::write_array((fs::path(dir) / "features.f32").string(), std::span<const float>(table.features));
  bin::write_array((fs::path(dir) / "labels.u8").string(), std::span<const std::uint8_t>(table.labels));
}

FeatureTable read_feature_table(const std::string& dir) {
  namespace fs = std::filesystem;
  const auto meta = nlohmann::json::parse(bin::read_text((fs::path(dir) / "table.json").string()));
  if (meta.at("version").get<int>() != 1) throw ValidationError("unsupported feature table version");
  FeatureTable t;
  t.epoch = parse_datetime(meta.at("epoch").get<std::string>());
  t.n_windows = meta.at("n_windows").get<std::int64_t>();
  t.grid_origin = {meta.at("grid_origin")[0].get<double>(), meta.at("grid_origin")[1].get<double>()};
  for (const auto& s : meta.at("regions")) t.regions.push_back(geo::RegionId::parse(s.get<std::string>()));
  const std::size_t cells = t.regions.size() * static_cast<std::size_t>(t.n_windows);
  t.features = bin::read_array<float>((fs::path(dir) / "features.f32").string(), cells * kFeatureDim);
  t.labels = bin::read_array<std::uint8_t>((fs::path(dir) / "labels.u8").string(), cells);
  return t;
}

}  // namespace crashformer::featurize
