#include "crashformer/pipeline.hpp"

#include <cmath>
#include <filesystem>

#include "crashformer/error.hpp"
#include "crashformer/tiles.hpp"

namespace crashformer::pipeline {

namespace fs = std::filesystem;

namespace {

void say(const Log& log, const std::string& m) {
  if (log) log(m);
}

void report(const Log& log, const std::string& what, const ingest::LoadReport& r) {
  say(log, what + ": " + std::to_string(r.accepted) + " accepted, " + std::to_string(r.rejected) + " rejected");
  for (const auto& d : r.diagnostics) say(log, "  " + d);
}

}  // namespace

RawData load_raw(const config::RunConfig& cfg, const Log& log) {
  RawData raw{ingest::load_accidents(cfg.paths.accidents), ingest::load_weather(cfg.paths.weather),
              ingest::load_demographics(cfg.paths.demographics)};
  report(log, cfg.paths.accidents, raw.accidents.report);
  report(log, cfg.paths.weather, raw.weather.report);
  report(log, cfg.paths.demographics, raw.demographics.report);
  return raw;
}

geo::HexGrid make_grid(const config::RunConfig& cfg, const std::vector<ingest::AccidentRecord>& accidents) {
  if (cfg.geoindex.origin_lat) return geo::HexGrid({*cfg.geoindex.origin_lat, *cfg.geoindex.origin_lon});
  if (accidents.empty()) throw ValidationError("no accidents to place the grid origin; set geoindex.origin_lat/lon");
  double lat = 0.0, lon = 0.0;
  for (const auto& a : accidents) {
    lat += a.lat;
    lon += a.lon;
  }
  const auto n = static_cast<double>(accidents.size());
  return geo::HexGrid({lat / n, lon / n});
}

featurize::FeatureTable featurize_city(const config::RunConfig& cfg, const RawData& raw,
                                       featurize::BuildStats* stats) {
  const auto& acc = raw.accidents.records;
  featurize::CityData city{make_grid(cfg, acc), {}, 0, acc, raw.weather.records};
  if ((!cfg.featurize.start_date || !cfg.featurize.end_date) && acc.empty()) {
    throw ValidationError("no accidents to infer the study period; set featurize.start_date/end_date");
  }
  CivilTime first{}, last{};
  if (!acc.empty()) {
    first = last = acc.front().timestamp;
    for (const auto& a : acc) {
      first = std::min(first, a.timestamp);
      last = std::max(last, a.timestamp);
    }
  }
  const auto start = cfg.featurize.start_date ? parse_datetime(*cfg.featurize.start_date) : first;
  const auto end = cfg.featurize.end_date ? parse_datetime(*cfg.featurize.end_date) : last;
  city.epoch = std::chrono::floor<std::chrono::days>(start);
  city.n_windows = featurize::windows_through(city.epoch, civil_date(end));
  featurize::FeaturizeConfig fc;
  fc.weather_radius_km = cfg.featurize.weather_radius_km;
  return featurize::build_feature_table(city, fc, stats);
}

std::vector<std::string> fetch_tiles(const config::RunConfig& cfg, const geo::HexGrid& grid,
                                     const std::vector<geo::RegionId>& regions, const Log& log) {
  tiles::FetchOptions opts;
  opts.cache_dir = cfg.paths.tile_cache;
  opts.source = cfg.geoindex.tile_source;
  opts.user_agent = cfg.geoindex.user_agent;
  opts.delay_seconds = cfg.geoindex.delay_seconds;
  tiles::TileFetcher fetcher(grid, opts);
  std::vector<std::string> paths;
  std::vector<std::string> missing;
  for (auto r : regions) {
    try {
      fetcher.fetch(r);
    } catch (const MissingTile& e) {
      missing.push_back(e.what());
    }
    paths.push_back(fetcher.path_for(r));
  }
  say(log, "tiles: " + std::to_string(regions.size() - missing.size()) + " of " + std::to_string(regions.size()) +
               " available, " + std::to_string(fetcher.network_requests()) + " network requests");
  if (!missing.empty()) {
    std::string msg = std::to_string(missing.size()) + " tile(s) missing:";
    for (const auto& m : missing) msg += "\n  " + m;
    throw MissingTile(msg);
  }
  return paths;
}

dataset::CityInputs city_inputs(const config::RunConfig& cfg, const Log& log) {
  dataset::CityInputs in;
  if (!cfg.paths.features.empty()) {
    in.table = featurize::read_feature_table(cfg.paths.features);
    say(log, "feature table: " + cfg.paths.features);
  } else {
    const auto raw = load_raw(cfg, log);
    in.table = featurize_city(cfg, raw);
  }
  say(log, "feature table: " + std::to_string(in.table.n_regions()) + " regions x " +
               std::to_string(in.table.n_windows) + " windows");
  const geo::HexGrid grid(in.table.grid_origin);
  const auto demo = ingest::load_demographics(cfg.paths.demographics);
  in.raw_demographics = dataset::region_demographics(grid, in.table.regions, demo.records);
  in.tile_paths = fetch_tiles(cfg, grid, in.table.regions, log);
  return in;
}

dataset::SplitSpec split_spec(const config::RunConfig& cfg, const featurize::FeatureTable& table) {
  dataset::SplitSpec s;
  s.kind = cfg.dataset.split;
  s.train = cfg.dataset.train;
  s.val = cfg.dataset.val;
  s.test = cfg.dataset.test;
  s.region_fraction = cfg.dataset.region_fraction;
  s.seed = cfg.dataset.seed;
  if (cfg.dataset.cutoff_date) {
    const auto w = featurize::window_index(parse_datetime(*cfg.dataset.cutoff_date), table.epoch).index;
    if (w >= table.n_windows) throw ValidationError("dataset.cutoff_date lies after the study period");
    s.cutoff_window = w;
  } else {
    const double at = (s.train + s.val) * static_cast<double>(table.n_windows) / featurize::kWindowsPerDay;
    s.cutoff_window = static_cast<std::int64_t>(std::llround(at)) * featurize::kWindowsPerDay;
  }
  return s;
}

}  // namespace crashformer::pipeline
