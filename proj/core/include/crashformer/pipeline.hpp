#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "crashformer/config.hpp"
#include "crashformer/dataset.hpp"
#include "crashformer/featurize.hpp"
#include "crashformer/ingest.hpp"

namespace crashformer::pipeline {

using Log = std::function<void(const std::string&)>;

struct RawData {
  ingest::Loaded<std::vector<ingest::AccidentRecord>> accidents;
  ingest::Loaded<std::vector<ingest::WeatherRecord>> weather;
  ingest::Loaded<std::map<std::string, ingest::DemographicRecord>> demographics;
};

RawData load_raw(const config::RunConfig& cfg, const Log& log = {});

/// Configured origin, or the mean accident coordinate.
geo::HexGrid make_grid(const config::RunConfig& cfg, const std::vector<ingest::AccidentRecord>& accidents);

featurize::FeatureTable featurize_city(const config::RunConfig& cfg, const RawData& raw,
                                       featurize::BuildStats* stats = nullptr);

/// Fetches (or finds in cache) the tile of every region. All missing tiles
/// are listed in one MissingTile error when offline.
std::vector<std::string> fetch_tiles(const config::RunConfig& cfg, const geo::HexGrid& grid,
                                     const std::vector<geo::RegionId>& regions, const Log& log = {});

/// Feature table (from paths.features when set), demographics and tiles.
dataset::CityInputs city_inputs(const config::RunConfig& cfg, const Log& log = {});

/// Split spec with the temporal cutoff resolved against the table's period.
dataset::SplitSpec split_spec(const config::RunConfig& cfg, const featurize::FeatureTable& table);

}  // namespace crashformer::pipeline
