#include <benchmark/benchmark.h>

#include <vector>

#include "crashformer/calendar.hpp"
#include "crashformer/featurize.hpp"
#include "crashformer/random.hpp"

namespace {

using namespace crashformer;

featurize::CityData make_city(int n_accidents, int days) {
  Rng rng(7);
  featurize::CityData city;
  city.grid = geo::HexGrid({29.76, -95.37});
  city.epoch = parse_datetime("2021-01-01 00:00:00");
  city.n_windows = static_cast<std::int64_t>(days) * featurize::kWindowsPerDay;
  const auto span = std::chrono::hours{24} * days;
  for (int i = 0; i < n_accidents; ++i) {
    ingest::AccidentRecord a;
    a.timestamp = city.epoch + std::chrono::seconds{static_cast<long long>(rng.uniform() *
                                                                           std::chrono::seconds{span}.count())};
    a.lat = 29.76 + rng.uniform(-0.15, 0.15);
    a.lon = -95.37 + rng.uniform(-0.15, 0.15);
    a.severity = 1.0 + static_cast<double>(rng.below(4));
    for (auto& p : a.poi) p = rng.uniform() < 0.2;
    city.accidents.push_back(a);
  }
  for (int i = 0; i < days * 2; ++i) {
    ingest::WeatherRecord w;
    w.station_lat = 29.76 + rng.uniform(-0.2, 0.2);
    w.station_lon = -95.37 + rng.uniform(-0.2, 0.2);
    w.start = city.epoch + std::chrono::hours{static_cast<long long>(rng.below(24 * days))};
    w.end = w.start + std::chrono::hours{1 + static_cast<long long>(rng.below(8))};
    w.kind = static_cast<ingest::WeatherKind>(rng.below(7));
    w.precipitation_mm = rng.uniform(0.0, 5.0);
    city.weather.push_back(w);
  }
  return city;
}

void BM_BuildFeatureTable(benchmark::State& state) {
  const auto city = make_city(static_cast<int>(state.range(0)), 90);
  for (auto _ : state) {
    auto table = featurize::build_feature_table(city);
    benchmark::DoNotOptimize(table.features.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BuildFeatureTable)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_LocateRegion(benchmark::State& state) {
  const geo::HexGrid grid({29.76, -95.37});
  Rng rng(3);
  std::vector<std::pair<double, double>> pts(4096);
  for (auto& p : pts) p = {29.76 + rng.uniform(-0.3, 0.3), -95.37 + rng.uniform(-0.3, 0.3)};
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& [lat, lon] = pts[i++ & 4095];
    benchmark::DoNotOptimize(grid.locate_region(lat, lon));
  }
}
BENCHMARK(BM_LocateRegion);

}  // namespace

BENCHMARK_MAIN();
