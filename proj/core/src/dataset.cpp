#include "crashformer/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <set>

#include <json.hpp>

#include "binary_io.hpp"
#include "crashformer/error.hpp"
#include "crashformer/random.hpp"

namespace crashformer::dataset {

namespace fs = std::filesystem;
using featurize::kFeatureDim;
using nlohmann::json;

std::vector<Sample> assemble_samples(const featurize::FeatureTable& table, int K) {
  if (K < 1) throw ValidationError("history length K must be >= 1");
  if (static_cast<std::int64_t>(K) > table.n_windows - 1) {
    throw ValidationError("history length K=" + std::to_string(K) + " needs at least K+1 windows, table has " +
                          std::to_string(table.n_windows));
  }
  std::vector<Sample> out;
  out.reserve(table.n_regions() * static_cast<std::size_t>(table.n_windows - K));
  for (std::size_t r = 0; r < table.n_regions(); ++r) {
    for (std::int64_t w = K; w < table.n_windows; ++w) {
      Sample s;
      s.region = table.regions[r];
      s.target_window = w;
      s.history.reserve(static_cast<std::size_t>(K) * kFeatureDim);
      for (std::int64_t h = w - K; h < w; ++h) {
        const auto f = table.feature(r, h);
        s.history.insert(s.history.end(), f.begin(), f.end());
      }
      s.tile_ref = static_cast<std::uint32_t>(r);
      s.label = table.label_at(r, w);
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::string to_string(SplitKind k) {
  switch (k) {
    case SplitKind::random: return "random";
    case SplitKind::temporal: return "temporal";
    case SplitKind::spatial: return "spatial";
  }
  return "random";
}

SplitKind parse_split_kind(const std::string& s) {
  if (s == "random") return SplitKind::random;
  if (s == "temporal") return SplitKind::temporal;
  if (s == "spatial") return SplitKind::spatial;
  throw ValidationError("unknown split kind '" + s + "'");
}

void SplitSpec::validate() const {
  if (!(train > 0 && val > 0 && test > 0) || std::abs(train + val + test - 1.0) > 1e-9) {
    throw ValidationError("split ratios must be positive and sum to 1");
  }
  if (kind == SplitKind::spatial && !(region_fraction > 0.0 && region_fraction < 1.0)) {
    throw ValidationError("region_fraction must lie in (0, 1)");
  }
}

std::vector<std::size_t> Split::indices(Part p) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] == p) out.push_back(i);
  }
  return out;
}

namespace {

void assign_shuffled(std::vector<std::size_t> idx, double val_fraction, std::vector<Part>& out, Rng& rng) {
  rng.shuffle(idx);
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(idx.size())));
  for (std::size_t i = 0; i < idx.size(); ++i) out[idx[i]] = i < n_val ? Part::val : Part::train;
}

}  // namespace

Split split(const std::vector<Sample>& samples, const SplitSpec& spec) {
  spec.validate();
  const std::size_t n = samples.size();
  Split result;
  result.assignment.assign(n, Part::test);
  Rng rng(spec.seed);
  const double val_in_train_side = spec.val / (spec.train + spec.val);

  switch (spec.kind) {
    case SplitKind::random: {
      std::vector<std::size_t> idx(n);
      for (std::size_t i = 0; i < n; ++i) idx[i] = i;
      rng.shuffle(idx);
      const auto n_train = static_cast<std::size_t>(std::llround(spec.train * static_cast<double>(n)));
      const auto n_val = static_cast<std::size_t>(std::llround(spec.val * static_cast<double>(n)));
      for (std::size_t i = 0; i < n; ++i) {
        result.assignment[idx[i]] = i < n_train ? Part::train : (i < n_train + n_val ? Part::val : Part::test);
      }
      break;
    }
    case SplitKind::temporal: {
      std::int64_t first = std::numeric_limits<std::int64_t>::max();
      for (const auto& s : samples) first = std::min(first, s.target_window);
      const std::int64_t pre = spec.cutoff_window - first;
      const std::int64_t val_windows =
          std::max<std::int64_t>(1, std::llround(val_in_train_side * static_cast<double>(pre)));
      const std::int64_t val_start = spec.cutoff_window - val_windows;
      for (std::size_t i = 0; i < n; ++i) {
        const auto w = samples[i].target_window;
        result.assignment[i] = w >= spec.cutoff_window ? Part::test : (w >= val_start ? Part::val : Part::train);
      }
      break;
    }
    case SplitKind::spatial: {
      std::set<geo::RegionId> unique;
      for (const auto& s : samples) unique.insert(s.region);
      std::vector<geo::RegionId> regions(unique.begin(), unique.end());
      if (regions.size() < 2) throw ValidationError("spatial split needs at least two regions");
      rng.shuffle(regions);
      const auto n_side = std::clamp<std::size_t>(
          static_cast<std::size_t>(std::llround(spec.region_fraction * static_cast<double>(regions.size()))), 1,
          regions.size() - 1);
      // Val holds out whole train-side regions too, so early stopping sees unseen regions.
      if (n_side >= 2) {
        const auto n_val = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::llround(val_in_train_side * static_cast<double>(n_side))), 1, n_side - 1);
        const std::set<geo::RegionId> val(regions.begin(), regions.begin() + static_cast<std::ptrdiff_t>(n_val));
        const std::set<geo::RegionId> train(regions.begin() + static_cast<std::ptrdiff_t>(n_val),
                                            regions.begin() + static_cast<std::ptrdiff_t>(n_side));
        for (std::size_t i = 0; i < n; ++i) {
          if (val.contains(samples[i].region)) result.assignment[i] = Part::val;
          else if (train.contains(samples[i].region)) result.assignment[i] = Part::train;
        }
        break;
      }
      std::vector<std::size_t> side_idx;
      for (std::size_t i = 0; i < n; ++i) {
        if (samples[i].region == regions.front()) side_idx.push_back(i);
      }
      assign_shuffled(std::move(side_idx), val_in_train_side, result.assignment, rng);
      break;
    }
  }

  std::size_t counts[3] = {0, 0, 0};
  for (auto p : result.assignment) ++counts[static_cast<int>(p)];
  if (counts[0] == 0 || counts[1] == 0 || counts[2] == 0) {
    throw ValidationError("degenerate " + to_string(spec.kind) + " split: train/val/test sizes " +
                          std::to_string(counts[0]) + "/" + std::to_string(counts[1]) + "/" +
                          std::to_string(counts[2]));
  }
  return result;
}

ClassWeights class_weights(const std::vector<Sample>& samples, const std::vector<std::size_t>& train) {
  std::size_t pos = 0;
  for (auto i : train) pos += samples[i].label;
  const std::size_t n = train.size();
  if (pos == 0 || pos == n) throw ValidationError("class weights need both labels in the training set");
  return ClassWeights{static_cast<double>(n) / (2.0 * static_cast<double>(n - pos)),
                      static_cast<double>(n) / (2.0 * static_cast<double>(pos))};
}

NormalizationStats fit_normalization(const std::map<geo::RegionId, std::vector<double>>& raw,
                                     const std::vector<geo::RegionId>& train_regions) {
  std::set<geo::RegionId> unique(train_regions.begin(), train_regions.end());
  if (unique.size() < 2) throw ValidationError("normalization needs at least two training regions");
  NormalizationStats stats{std::vector<double>(kDemoDim, 0.0), std::vector<double>(kDemoDim, 0.0)};
  for (std::size_t f = 0; f < kDemoDim; ++f) {
    double sum = 0.0;
    std::size_t count = 0;
    for (auto r : unique) {
      const double v = raw.at(r).at(f);
      if (std::isnan(v)) continue;
      sum += v;
      ++count;
    }
    if (count == 0) continue;
    const double mean = sum / static_cast<double>(count);
    double ss = 0.0;
    for (auto r : unique) {
      const double v = raw.at(r)[f];
      if (!std::isnan(v)) ss += (v - mean) * (v - mean);
    }
    stats.mean[f] = mean;
    stats.stddev[f] = std::sqrt(ss / static_cast<double>(count));
  }
  return stats;
}

std::vector<float> apply_normalization(const NormalizationStats& stats, const std::vector<double>& raw) {
  if (raw.size() != kDemoDim) throw ValidationError("demographic vector must have 144 entries");
  std::vector<float> out(kDemoDim, 0.0f);
  for (std::size_t f = 0; f < kDemoDim; ++f) {
    if (std::isnan(raw[f]) || stats.stddev[f] == 0.0) continue;
    out[f] = static_cast<float>((raw[f] - stats.mean[f]) / stats.stddev[f]);
  }
  return out;
}

std::map<geo::RegionId, std::vector<double>> region_demographics(
    const geo::HexGrid& grid, const std::vector<geo::RegionId>& regions,
    const std::map<std::string, ingest::DemographicRecord>& demo) {
  const auto table = ingest::zip_table(demo);
  std::map<geo::RegionId, std::vector<double>> out;
  for (auto r : regions) out[r] = demo.at(geo::assign_zip(grid, r, table)).features;
  return out;
}

namespace {

json spec_to_json(const SplitSpec& s) {
  return json{{"kind", to_string(s.kind)}, {"train", s.train},         {"val", s.val},
              {"test", s.test},             {"cutoff_window", s.cutoff_window},
              {"region_fraction", s.region_fraction}, {"seed", s.seed}};
}

SplitSpec spec_from_json(const json& j) {
  SplitSpec s;
  s.kind = parse_split_kind(j.at("kind").get<std::string>());
  s.train = j.at("train").get<double>();
  s.val = j.at("val").get<double>();
  s.test = j.at("test").get<double>();
  s.cutoff_window = j.at("cutoff_window").get<std::int64_t>();
  s.region_fraction = j.at("region_fraction").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

std::string path_in(const std::string& dir, const char* name) { return (fs::path(dir) / name).string(); }

}  // namespace

std::string to_json(const SplitSpec& s) { return spec_to_json(s).dump(); }

SplitSpec split_spec_from_json(const std::string& text) {
  try {
    return spec_from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("split spec: ") + e.what());
  }
}

std::string write_dataset(const Container& c, const std::string& dir) {
  fs::create_directories(dir);
  const std::size_t n = c.samples.size();
  const std::size_t hist = static_cast<std::size_t>(c.K) * kFeatureDim;
  if (c.split.assignment.size() != n) throw ValidationError("split assignment does not cover every sample");

  std::vector<float> seq;
  std::vector<float> demo;
  std::vector<std::uint8_t> labels;
  std::vector<std::uint64_t> regions;
  std::vector<std::uint32_t> windows;
  seq.reserve(n * hist);
  demo.reserve(n * kDemoDim);
  for (const auto& s : c.samples) {
    if (s.history.size() != hist || s.demo.size() != kDemoDim) {
      throw ValidationError("sample shape does not match K=" + std::to_string(c.K) + " / demo_dim=144");
    }
    seq.insert(seq.end(), s.history.begin(), s.history.end());
    demo.insert(demo.end(), s.demo.begin(), s.demo.end());
    labels.push_back(s.label);
    regions.push_back(s.region.cell);
    windows.push_back(static_cast<std::uint32_t>(s.target_window));
  }
  std::vector<int> assignment;
  assignment.reserve(n);
  for (auto p : c.split.assignment) assignment.push_back(static_cast<int>(p));

  json manifest;
  manifest["version"] = kContainerVersion;
  manifest["n_samples"] = n;
  manifest["K"] = c.K;
  manifest["n_features"] = kFeatureDim;
  manifest["demo_dim"] = kDemoDim;
  manifest["tile_shape"] = {c.tile_shape.height, c.tile_shape.width, c.tile_shape.channels};
  manifest["split"] = {{"spec", spec_to_json(c.split_spec)}, {"assignments", assignment}};
  manifest["normalization"] = {{"mean", c.normalization.mean}, {"std", c.normalization.stddev}};
  manifest["class_weights"] = {{"w0", c.class_weights.w0}, {"w1", c.class_weights.w1}};
  manifest["grid_origin"] = {c.grid_origin.lat, c.grid_origin.lon};
  manifest["epoch"] = c.epoch;
  const std::string text = manifest.dump(2) + "\n";

  json tiles = json::array();
  for (std::size_t i = 0; i < c.tiles.size(); ++i) {
    tiles.push_back({{"ref", i}, {"region", c.tiles[i].first.str()}, {"path", c.tiles[i].second}});
  }

  bin::write_array(path_in(dir, "seq.f32"), std::span<const float>(seq));
  bin::write_array(path_in(dir, "demo.f32"), std::span<const float>(demo));
  bin::write_array(path_in(dir, "labels.u8"), std::span<const std::uint8_t>(labels));
  bin::write_array(path_in(dir, "regions.u64"), std::span<const std::uint64_t>(regions));
  bin::write_array(path_in(dir, "windows.u32"), std::span<const std::uint32_t>(windows));
  bin::write_text(path_in(dir, "tiles.json"), json{{"tiles", tiles}}.dump(2) + "\n");
  bin::write_text(path_in(dir, "manifest.json"), text);
  return text;
}

Container read_dataset(const std::string& dir) {
  json manifest;
  try {
    manifest = json::parse(bin::read_text(path_in(dir, "manifest.json")));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed manifest: ") + e.what());
  }
  Container c;
  try {
    if (manifest.at("version").get<int>() != kContainerVersion) {
      throw ValidationError("dataset version mismatch: expected " + std::to_string(kContainerVersion) + ", got " +
                            manifest.at("version").dump());
    }
    if (manifest.at("n_features").get<std::size_t>() != kFeatureDim ||
        manifest.at("demo_dim").get<std::size_t>() != kDemoDim) {
      throw ValidationError("dataset feature/demographic widths do not match 27/144");
    }
    const auto n = manifest.at("n_samples").get<std::size_t>();
    c.K = manifest.at("K").get<int>();
    const auto& shape = manifest.at("tile_shape");
    c.tile_shape = {shape.at(0).get<int>(), shape.at(1).get<int>(), shape.at(2).get<int>()};
    c.split_spec = spec_from_json(manifest.at("split").at("spec"));
    const auto assignment = manifest.at("split").at("assignments").get<std::vector<int>>();
    if (assignment.size() != n) throw ValidationError("length mismatch: split assignments vs n_samples");
    c.normalization.mean = manifest.at("normalization").at("mean").get<std::vector<double>>();
    c.normalization.stddev = manifest.at("normalization").at("std").get<std::vector<double>>();
    c.class_weights = {manifest.at("class_weights").at("w0").get<double>(),
                       manifest.at("class_weights").at("w1").get<double>()};
    c.grid_origin = {manifest.at("grid_origin")[0].get<double>(), manifest.at("grid_origin")[1].get<double>()};
    c.epoch = manifest.at("epoch").get<std::string>();

    const std::size_t hist = static_cast<std::size_t>(c.K) * kFeatureDim;
    const auto seq = bin::read_array<float>(path_in(dir, "seq.f32"), n * hist);
    const auto demo = bin::read_array<float>(path_in(dir, "demo.f32"), n * kDemoDim);
    const auto labels = bin::read_array<std::uint8_t>(path_in(dir, "labels.u8"), n);
    const auto regions = bin::read_array<std::uint64_t>(path_in(dir, "regions.u64"), n);
    const auto windows = bin::read_array<std::uint32_t>(path_in(dir, "windows.u32"), n);

    const auto tiles = json::parse(bin::read_text(path_in(dir, "tiles.json"))).at("tiles");
    std::map<std::uint64_t, std::uint32_t> ref_of;
    for (const auto& t : tiles) {
      const auto region = geo::RegionId::parse(t.at("region").get<std::string>());
      ref_of[region.cell] = static_cast<std::uint32_t>(c.tiles.size());
      c.tiles.emplace_back(region, t.at("path").get<std::string>());
    }

    c.samples.resize(n);
    c.split.assignment.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto& s = c.samples[i];
      s.region = geo::RegionId{regions[i], geo::kResolution};
      s.target_window = windows[i];
      s.history.assign(seq.begin() + static_cast<std::ptrdiff_t>(i * hist),
                       seq.begin() + static_cast<std::ptrdiff_t>((i + 1) * hist));
      s.demo.assign(demo.begin() + static_cast<std::ptrdiff_t>(i * kDemoDim),
                    demo.begin() + static_cast<std::ptrdiff_t>((i + 1) * kDemoDim));
      s.label = labels[i];
      const auto it = ref_of.find(s.region.cell);
      if (it == ref_of.end()) throw ValidationError("sample region " + s.region.str() + " has no tile entry");
      s.tile_ref = it->second;
      if (assignment[i] < 0 || assignment[i] > 2) throw ValidationError("bad split assignment value");
      c.split.assignment[i] = static_cast<Part>(assignment[i]);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed dataset container: ") + e.what());
  }
  return c;
}

double StatsReport::positive_percent_2dp() const { return std::round(positive_rate * 10000.0) / 100.0; }

StatsReport stats_report(std::size_t samples, std::size_t positives) {
  StatsReport r;
  r.samples = samples;
  r.positives = positives;
  r.positive_rate = samples ? static_cast<double>(positives) / static_cast<double>(samples) : 0.0;
  return r;
}

StatsReport stats_report(const std::vector<Sample>& samples) {
  StatsReport r;
  for (const auto& s : samples) {
    auto& reg = r.per_region[s.region];
    ++reg.samples;
    reg.positives += s.label;
    r.positives += s.label;
  }
  r.samples = samples.size();
  r.positive_rate = r.samples ? static_cast<double>(r.positives) / static_cast<double>(r.samples) : 0.0;
  for (auto& [region, reg] : r.per_region) {
    reg.rate = static_cast<double>(reg.positives) / static_cast<double>(reg.samples);
  }
  return r;
}

Container build_container(const CityInputs& inputs, int K, const SplitSpec& spec,
                          std::optional<ClassWeights> weight_override, std::int64_t min_target_window) {
  Container c;
  c.K = K;
  c.samples = assemble_samples(inputs.table, K);
  if (min_target_window > K) {
    std::erase_if(c.samples, [&](const Sample& s) { return s.target_window < min_target_window; });
  }
  c.split_spec = spec;
  c.split = split(c.samples, spec);
  const auto train = c.split.indices(Part::train);
  c.class_weights = weight_override ? *weight_override : class_weights(c.samples, train);

  std::set<geo::RegionId> train_regions;
  for (auto i : train) train_regions.insert(c.samples[i].region);
  c.normalization =
      fit_normalization(inputs.raw_demographics, std::vector<geo::RegionId>(train_regions.begin(), train_regions.end()));
  std::vector<std::vector<float>> per_region;
  for (auto r : inputs.table.regions) per_region.push_back(apply_normalization(c.normalization, inputs.raw_demographics.at(r)));
  for (auto& s : c.samples) s.demo = per_region[s.tile_ref];

  for (std::size_t r = 0; r < inputs.table.regions.size(); ++r) {
    c.tiles.emplace_back(inputs.table.regions[r], r < inputs.tile_paths.size() ? inputs.tile_paths[r] : std::string{});
  }
  c.grid_origin = inputs.table.grid_origin;
  c.epoch = format_datetime(inputs.table.epoch);
  return c;
}

}  // namespace crashformer::dataset
