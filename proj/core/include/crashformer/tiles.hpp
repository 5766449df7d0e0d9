#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

#include "crashformer/geoindex.hpp"
#include "crashformer/png_io.hpp"

namespace crashformer::tiles {

inline constexpr int kTileSize = 256;

struct MapTile {
  geo::RegionId region;
  /// kTileSize x kTileSize x 3, row-major interleaved RGB.
  std::vector<std::uint8_t> pixels;

  RgbImage image() const { return {kTileSize, kTileSize, pixels}; }
};

struct FetchOptions {
  std::string cache_dir;
  /// `offline` or a URL template containing {z}, {x} and {y}.
  std::string source = "offline";
  std::string user_agent = "crashformer-research/0.1 (accident-risk tile cache)";
  double delay_seconds = 0.0;
  int max_retries = 3;
  double backoff_seconds = 0.5;
  int max_concurrent = 2;
  long timeout_seconds = 30;
};

/// `cache_dir/{z}/{x}/{y}.png`
std::string cache_path(const std::string& cache_dir, geo::TileCoord t);
std::string expand_url(const std::string& url_template, geo::TileCoord t);

/// Normalizes any decoded raster to kTileSize x kTileSize (nearest resample).
std::vector<std::uint8_t> normalize_tile(const RgbImage& img);

/// Writes `bytes` to `path` through a temp file and an atomic rename.
void atomic_write(const std::string& path, const std::vector<std::uint8_t>& bytes);

/// Cache-first tile loader for the slippy-map tile of each region centre.
/// Safe to share between threads; downloads are bounded by max_concurrent.
class TileFetcher {
 public:
  TileFetcher(geo::HexGrid grid, FetchOptions options);

  MapTile fetch(geo::RegionId region);
  std::string path_for(geo::RegionId region) const;
  geo::TileCoord coord_for(geo::RegionId region) const;

  /// Number of HTTP requests issued so far (including retries).
  std::size_t network_requests() const { return requests_.load(); }

 private:
  std::vector<std::uint8_t> download(const std::string& url);

  geo::HexGrid grid_;
  FetchOptions opts_;
  std::atomic<std::size_t> requests_{0};
  std::mutex slot_mutex_;
  std::condition_variable slot_cv_;
  int active_downloads_ = 0;
};

}  // namespace crashformer::tiles
