#include "crashformer/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>

#include <json.hpp>

#include "binary_io.hpp"
#include "crashformer/error.hpp"
#include "crashformer/featurize.hpp"
#include "crashformer/ingest.hpp"
#include "crashformer/png_io.hpp"
#include "crashformer/random.hpp"
#include "crashformer/tiles.hpp"

namespace crashformer::synth {

namespace fs = std::filesystem;
using nlohmann::json;

void WorldConfig::validate() const {
  const auto fail = [](const std::string& m) { throw ValidationError("world config: " + m); };
  if (n_regions < 2) fail("n_regions must be >= 2");
  if (n_days < 1) fail("n_days must be >= 1");
  if (!(base_rate > 0.0 && base_rate < 1.0)) fail("base_rate must lie in (0, 1)");
  if (signal.w_hist < 0 || signal.w_weather < 0 || signal.w_demo < 0 || signal.w_img < 0) {
    fail("signal weights must be >= 0");
  }
  geo::validate_coordinates(bbox_min.lat, bbox_min.lon);
  geo::validate_coordinates(bbox_max.lat, bbox_max.lon);
  if (!(bbox_min.lat < bbox_max.lat && bbox_min.lon < bbox_max.lon)) fail("bbox_min must be south-west of bbox_max");
  if (max_lines < 1) fail("max_lines must be >= 1");
}

namespace {

constexpr double kWeatherRadiusKm = featurize::FeaturizeConfig{}.weather_radius_km;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<geo::RegionId> pick_regions(const geo::HexGrid& grid, const WorldConfig& cfg) {
  const auto [x0, y0] = grid.project(cfg.bbox_min);
  const auto [x1, y1] = grid.project(cfg.bbox_max);
  const double reach = std::max({std::abs(x0), std::abs(x1), std::abs(y0), std::abs(y1)});
  const auto span = static_cast<std::int64_t>(std::ceil(reach / geo::kEdgeKm)) + 2;
  std::vector<std::pair<double, geo::RegionId>> candidates;
  for (std::int64_t q = -span; q <= span; ++q) {
    for (std::int64_t r = -span; r <= span; ++r) {
      const auto id = geo::HexGrid::from_axial(q, r);
      const auto c = grid.region_center(id);
      if (c.lat < cfg.bbox_min.lat || c.lat > cfg.bbox_max.lat || c.lon < cfg.bbox_min.lon || c.lon > cfg.bbox_max.lon) {
        continue;
      }
      candidates.emplace_back(geo::haversine_km(c, grid.origin()), id);
    }
  }
  if (candidates.size() < static_cast<std::size_t>(cfg.n_regions)) {
    throw ValidationError("bounding box holds only " + std::to_string(candidates.size()) + " regions, " +
                          std::to_string(cfg.n_regions) + " requested");
  }
  std::sort(candidates.begin(), candidates.end());
  std::vector<geo::RegionId> out;
  for (int i = 0; i < cfg.n_regions; ++i) out.push_back(candidates[static_cast<std::size_t>(i)].second);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<ingest::WeatherRecord> make_weather(const std::vector<geo::LatLon>& stations, CivilTime epoch, int n_days,
                                                Rng& rng) {
  using namespace std::chrono;
  static constexpr ingest::WeatherKind kinds[] = {ingest::WeatherKind::rain,  ingest::WeatherKind::fog,
                                                  ingest::WeatherKind::cold,  ingest::WeatherKind::snow,
                                                  ingest::WeatherKind::storm, ingest::WeatherKind::hail,
                                                  ingest::WeatherKind::other};
  std::vector<ingest::WeatherRecord> out;
  for (const auto& s : stations) {
    for (int day = 0; day < n_days; ++day) {
      const auto n_events = static_cast<int>(rng.below(3));  // 0, 1 or 2 events a day
      for (int e = 0; e < n_events; ++e) {
        ingest::WeatherRecord w;
        w.station_lat = s.lat;
        w.station_lon = s.lon;
        const auto offset_min = static_cast<long>(rng.below(24 * 60));
        const auto duration_min = static_cast<long>(60 + rng.below(17 * 60));
        w.start = epoch + days(day) + minutes(offset_min);
        w.end = w.start + minutes(duration_min);
        w.kind = kinds[rng.below(std::size(kinds))];
        w.severity = static_cast<double>(1 + rng.below(4));
        const bool wet = w.kind == ingest::WeatherKind::rain || w.kind == ingest::WeatherKind::storm ||
                         w.kind == ingest::WeatherKind::snow || w.kind == ingest::WeatherKind::hail;
        w.precipitation_mm = wet ? static_cast<double>(rng.below(101)) / 10.0 : 0.0;
        out.push_back(w);
      }
    }
  }
  return out;
}

void draw_line(RgbImage& img, double x0, double y0, double x1, double y1, int thickness) {
  const double len = std::hypot(x1 - x0, y1 - y0);
  const int steps = std::max(1, static_cast<int>(std::ceil(len * 2)));
  const int h = thickness / 2;
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    const int cx = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
    const int cy = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
    for (int dy = -h; dy <= h; ++dy) {
      for (int dx = -h; dx <= h; ++dx) {
        const int x = cx + dx, y = cy + dy;
        if (x < 0 || y < 0 || x >= img.width || y >= img.height) continue;
        auto* p = &img.pixels[static_cast<std::size_t>((y * img.width + x) * 3)];
        p[0] = 70;
        p[1] = 70;
        p[2] = 80;
      }
    }
  }
}

RgbImage draw_tile(int lines, Rng& rng) {
  RgbImage img{tiles::kTileSize, tiles::kTileSize,
               std::vector<std::uint8_t>(static_cast<std::size_t>(tiles::kTileSize * tiles::kTileSize * 3))};
  for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
    img.pixels[i] = 242;
    img.pixels[i + 1] = 239;
    img.pixels[i + 2] = 233;
  }
  const double S = tiles::kTileSize - 1;
  for (int i = 0; i < lines; ++i) {
    draw_line(img, rng.uniform() * S, rng.uniform() * S, rng.uniform() * S, rng.uniform() * S, 3);
  }
  return img;
}

std::string region_key(geo::RegionId r) { return r.str(); }

}  // namespace

World generate_world(const WorldConfig& cfg, const std::string& out_dir) {
  using namespace std::chrono;
  cfg.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw RuntimeFailure("cannot create output directory '" + out_dir + "'");

  Rng rng(cfg.seed);
  World world;
  world.origin = {(cfg.bbox_min.lat + cfg.bbox_max.lat) / 2.0, (cfg.bbox_min.lon + cfg.bbox_max.lon) / 2.0};
  const geo::HexGrid grid(world.origin);
  world.epoch = parse_datetime(cfg.start_date);
  world.n_windows = static_cast<std::int64_t>(cfg.n_days) * featurize::kWindowsPerDay;
  world.regions = pick_regions(grid, cfg);
  const std::size_t R = world.regions.size();
  const auto T = static_cast<std::size_t>(world.n_windows);

  // Static per-region factors.
  for (std::size_t i = 0; i < R; ++i) {
    world.risk.push_back(rng.normal());
    const int lines = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.max_lines) + 1));
    world.lines.push_back(lines);
    world.road_density.push_back(static_cast<double>(lines) / cfg.max_lines);
    world.zips.push_back(std::to_string(70000 + i));
  }

  const std::vector<geo::LatLon> stations = {{world.origin.lat + 0.03, world.origin.lon + 0.02},
                                             {world.origin.lat - 0.02, world.origin.lon - 0.03}};
  const auto weather = make_weather(stations, world.epoch, cfg.n_days, rng);

  // Storm flag per (region, window), computed exactly as featurization does.
  std::vector<std::uint8_t> storm(R * T, 0);
  for (std::size_t i = 0; i < R; ++i) {
    const auto c = grid.region_center(world.regions[i]);
    for (const auto& w : weather) {
      if (w.kind != ingest::WeatherKind::storm) continue;
      if (geo::haversine_km(c, {w.station_lat, w.station_lon}) > kWeatherRadiusKm) continue;
      const auto first = std::max<std::int64_t>(0, featurize::window_index(w.start, world.epoch).index);
      for (std::int64_t t = first; t < world.n_windows; ++t) {
        const featurize::TimeWindow tw{t, world.epoch};
        if (tw.start() > w.end) break;
        if (featurize::overlaps(w, tw)) storm[i * T + static_cast<std::size_t>(t)] = 1;
      }
    }
  }

  world.probability.assign(R * T, 0.0);
  world.label.assign(R * T, 0);
  std::vector<ingest::AccidentRecord> accidents;
  const double base_logit = std::log(cfg.base_rate / (1.0 - cfg.base_rate));
  const auto& s = cfg.signal;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < R; ++i) {
      int recent = 0;
      for (std::size_t k = 1; k <= 4 && k <= t; ++k) recent += world.label[i * T + t - k];
      const double p = sigmoid(base_logit + s.w_hist * recent + s.w_weather * storm[i * T + t] +
                               s.w_demo * world.risk[i] + s.w_img * world.road_density[i]);
      world.probability[i * T + t] = p;
      if (!rng.bernoulli(p)) continue;
      world.label[i * T + t] = 1;
      const auto center = grid.project(grid.region_center(world.regions[i]));
      const int n = rng.bernoulli(0.3) ? 2 : 1;
      for (int a = 0; a < n; ++a) {
        ingest::AccidentRecord rec;
        // Points within 0.8 edge of the centre always fall inside the hexagon.
        for (;;) {
          const double rad = 0.8 * geo::kEdgeKm * std::sqrt(rng.uniform());
          const double ang = 2.0 * std::numbers::pi * rng.uniform();
          const auto ll = grid.unproject(center.first + rad * std::cos(ang), center.second + rad * std::sin(ang));
          rec.lat = std::round(ll.lat * 1e6) / 1e6;
          rec.lon = std::round(ll.lon * 1e6) / 1e6;
          if (grid.locate_region(rec.lat, rec.lon) == world.regions[i]) break;
        }
        const featurize::TimeWindow tw{static_cast<std::int64_t>(t), world.epoch};
        rec.timestamp = tw.start() + seconds(static_cast<long>(rng.below(6 * 3600)));
        rec.severity = static_cast<double>(1 + rng.below(4));
        for (auto& f : rec.poi) f = rng.bernoulli(0.2);
        accidents.push_back(rec);
      }
    }
  }
  std::sort(accidents.begin(), accidents.end(),
            [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
  world.accidents = accidents.size();

  std::vector<ingest::DemographicRecord> demo;
  for (std::size_t i = 0; i < R; ++i) {
    const auto c = grid.region_center(world.regions[i]);
    ingest::DemographicRecord d;
    d.zip = world.zips[i];
    d.lat = std::round(c.lat * 1e6) / 1e6;
    d.lon = std::round(c.lon * 1e6) / 1e6;
    d.features.push_back(world.risk[i]);
    for (std::size_t f = 1; f < ingest::kDemoDim; ++f) d.features.push_back(rng.normal());
    demo.push_back(std::move(d));
  }

  const fs::path out(out_dir);
  ingest::write_accidents((out / "accidents.csv").string(), accidents);
  ingest::write_weather((out / "weather.csv").string(), weather);
  ingest::write_demographics((out / "demographics.csv").string(), demo);

  json regions = json::array();
  std::map<std::pair<std::int64_t, std::int64_t>, geo::RegionId> tile_owner;
  for (std::size_t i = 0; i < R; ++i) {
    const auto c = grid.region_center(world.regions[i]);
    const auto tc = geo::tile_coords(c.lat, c.lon);
    if (const auto [it, fresh] = tile_owner.try_emplace({tc.x, tc.y}, world.regions[i]); !fresh) {
      throw RuntimeFailure("regions " + it->second.str() + " and " + world.regions[i].str() + " share map tile " +
                           std::to_string(tc.x) + "/" + std::to_string(tc.y));
    }
    const auto path = tiles::cache_path((out / "tiles").string(), tc);
    fs::create_directories(fs::path(path).parent_path());
    write_png(path, draw_tile(world.lines[i], rng));
    int occupied = 0;
    for (std::size_t t = 0; t < T; ++t) occupied += world.label[i * T + t];
    regions.push_back({{"id", region_key(world.regions[i])},
                       {"risk", world.risk[i]},
                       {"road_density", world.road_density[i]},
                       {"lines", world.lines[i]},
                       {"zip", world.zips[i]},
                       {"tile", {tc.zoom, tc.x, tc.y}},
                       {"accident_windows", occupied}});
  }

  json truth = json::object();
  for (std::size_t i = 0; i < R; ++i) {
    truth[region_key(world.regions[i])] =
        std::vector<double>(world.probability.begin() + static_cast<std::ptrdiff_t>(i * T),
                            world.probability.begin() + static_cast<std::ptrdiff_t>((i + 1) * T));
  }
  bin::write_text((out / "truth.json").string(), truth.dump() + "\n");

  json meta;
  meta["origin"] = {world.origin.lat, world.origin.lon};
  meta["epoch"] = format_datetime(world.epoch);
  meta["n_windows"] = world.n_windows;
  meta["n_days"] = cfg.n_days;
  meta["seed"] = cfg.seed;
  meta["base_rate"] = cfg.base_rate;
  meta["signal"] = {{"w_hist", s.w_hist}, {"w_weather", s.w_weather}, {"w_demo", s.w_demo}, {"w_img", s.w_img}};
  meta["max_lines"] = cfg.max_lines;
  meta["accidents"] = world.accidents;
  meta["weather_records"] = weather.size();
  meta["regions"] = regions;
  bin::write_text((out / "world.json").string(), meta.dump(2) + "\n");

  // Pipeline configuration pointing at the generated files; paths are
  // relative to this file's directory.
  const auto last_day = civil_date(world.epoch + days(cfg.n_days - 1));
  char end_date[16];
  std::snprintf(end_date, sizeof end_date, "%04d-%02u-%02u", static_cast<int>(last_day.year()),
                static_cast<unsigned>(last_day.month()), static_cast<unsigned>(last_day.day()));
  json run;
  run["paths"] = {{"accidents", "accidents.csv"},
                  {"weather", "weather.csv"},
                  {"demographics", "demographics.csv"},
                  {"tile_cache", "tiles"}};
  run["geoindex"] = {{"origin_lat", world.origin.lat}, {"origin_lon", world.origin.lon}, {"tile_source", "offline"}};
  run["featurize"] = {{"start_date", format_datetime(world.epoch).substr(0, 10)}, {"end_date", end_date}};
  bin::write_text((out / "config.json").string(), run.dump(2) + "\n");
  return world;
}

BayesReport bayes_report(std::span<const double> probabilities) {
  BayesReport r;
  r.n = probabilities.size();
  std::vector<double> p(probabilities.begin(), probabilities.end());
  std::sort(p.begin(), p.end(), std::greater<>());
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  r.expected_positives = total;
  const auto f1_top = [&](std::size_t k, double top_sum) {
    const double denom = static_cast<double>(k) + total;
    return denom == 0.0 ? 0.0 : 2.0 * top_sum / denom;
  };
  double prefix = 0.0;
  std::size_t k = 0;
  double argmax_sum = 0.0;
  std::size_t argmax_k = 0;
  r.best_f1_1 = 0.0;
  r.best_threshold = 1.0;
  while (k < p.size()) {
    // Advance over a block of equal probabilities; a threshold cannot split it.
    const double v = p[k];
    while (k < p.size() && p[k] == v) prefix += p[k++];
    const double f = f1_top(k, prefix);
    if (f > r.best_f1_1) {
      r.best_f1_1 = f;
      r.best_threshold = v;
    }
    if (v > 0.5) {
      argmax_sum = prefix;
      argmax_k = k;
    }
  }
  r.argmax_f1_1 = f1_top(argmax_k, argmax_sum);
  return r;
}

std::vector<std::pair<geo::RegionId, std::vector<double>>> read_truth(const std::string& out_dir) {
  const auto path = (fs::path(out_dir) / "truth.json").string();
  if (!fs::exists(path)) throw ValidationError("missing truth file '" + path + "'");
  std::vector<std::pair<geo::RegionId, std::vector<double>>> out;
  try {
    const auto j = json::parse(bin::read_text(path));
    for (const auto& [key, v] : j.items()) out.emplace_back(geo::RegionId::parse(key), v.get<std::vector<double>>());
  } catch (const json::exception& e) {
    throw ValidationError("corrupt truth file '" + path + "': " + e.what());
  }
  return out;
}

BayesReport world_oracle(const std::string& out_dir) {
  std::vector<double> all;
  for (const auto& [region, p] : read_truth(out_dir)) all.insert(all.end(), p.begin(), p.end());
  return bayes_report(all);
}

}  // namespace crashformer::synth
