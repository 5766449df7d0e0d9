#include "crashformer/tiles.hpp"

#include <curl/curl.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <thread>

#include "crashformer/error.hpp"

namespace crashformer::tiles {

namespace fs = std::filesystem;

namespace {

std::size_t collect_body(char* data, std::size_t size, std::size_t n, void* user) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(user);
  out->insert(out->end(), reinterpret_cast<std::uint8_t*>(data), reinterpret_cast<std::uint8_t*>(data) + size * n);
  return size * n;
}

void replace_all(std::string& s, const std::string& from, const std::string& to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

struct CurlGlobal {
  CurlGlobal() { curl_global_init(CURL_GLOBAL_DEFAULT); }
  ~CurlGlobal() { curl_global_cleanup(); }
};

std::string tile_name(geo::TileCoord t) {
  return std::to_string(t.zoom) + "/" + std::to_string(t.x) + "/" + std::to_string(t.y);
}

}  // namespace

std::string cache_path(const std::string& cache_dir, geo::TileCoord t) {
  return (fs::path(cache_dir) / std::to_string(t.zoom) / std::to_string(t.x) / (std::to_string(t.y) + ".png"))
      .string();
}

std::string expand_url(const std::string& url_template, geo::TileCoord t) {
  std::string url = url_template;
  replace_all(url, "{z}", std::to_string(t.zoom));
  replace_all(url, "{x}", std::to_string(t.x));
  replace_all(url, "{y}", std::to_string(t.y));
  return url;
}

std::vector<std::uint8_t> normalize_tile(const RgbImage& img) {
  return resize_nearest(img, kTileSize, kTileSize).pixels;
}

void atomic_write(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  const fs::path target(path);
  fs::create_directories(target.parent_path());
  std::ostringstream suffix;
  suffix << ".tmp." << std::this_thread::get_id() << '.' << std::random_device{}();
  const fs::path tmp = target.string() + suffix.str();
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw RuntimeFailure("cannot write '" + tmp.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw RuntimeFailure("short write to '" + tmp.string() + "'");
  }
  fs::rename(tmp, target);
}

TileFetcher::TileFetcher(geo::HexGrid grid, FetchOptions options) : grid_(grid), opts_(std::move(options)) {
  static CurlGlobal curl_global;
  if (opts_.source != "offline" && (opts_.source.find("{x}") == std::string::npos ||
                                    opts_.source.find("{y}") == std::string::npos ||
                                    opts_.source.find("{z}") == std::string::npos)) {
    throw ValidationError("tile source must be 'offline' or a URL template with {z}/{x}/{y}");
  }
  if (opts_.max_concurrent < 1) throw ValidationError("max_concurrent must be >= 1");
}

geo::TileCoord TileFetcher::coord_for(geo::RegionId region) const {
  const auto c = grid_.region_center(region);
  return geo::tile_coords(c.lat, c.lon, geo::kTileZoom);
}

std::string TileFetcher::path_for(geo::RegionId region) const { return cache_path(opts_.cache_dir, coord_for(region)); }

MapTile TileFetcher::fetch(geo::RegionId region) {
  const auto coord = coord_for(region);
  const auto path = cache_path(opts_.cache_dir, coord);
  if (fs::exists(path)) return MapTile{region, normalize_tile(read_png(path))};
  if (opts_.source == "offline") {
    throw MissingTile("missing tile " + tile_name(coord) + " for region " + region.str() + " (offline, cache '" +
                      opts_.cache_dir + "')");
  }
  const auto bytes = download(expand_url(opts_.source, coord));
  auto img = decode_png(bytes);
  atomic_write(path, bytes);
  return MapTile{region, normalize_tile(img)};
}

std::vector<std::uint8_t> TileFetcher::download(const std::string& url) {
  {
    std::unique_lock lock(slot_mutex_);
    slot_cv_.wait(lock, [&] { return active_downloads_ < opts_.max_concurrent; });
    ++active_downloads_;
  }
  struct SlotRelease {
    TileFetcher* self;
    ~SlotRelease() {
      {
        std::lock_guard lock(self->slot_mutex_);
        --self->active_downloads_;
      }
      self->slot_cv_.notify_one();
    }
  } release{this};

  if (opts_.delay_seconds > 0) std::this_thread::sleep_for(std::chrono::duration<double>(opts_.delay_seconds));

  std::string last_error;
  for (int attempt = 0; attempt <= opts_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::duration<double>(opts_.backoff_seconds * (1 << (attempt - 1))));
    }
    std::vector<std::uint8_t> body;
    CURL* curl = curl_easy_init();
    if (!curl) throw RuntimeFailure("curl_easy_init failed");
    curl_easy_setopt(curl, CURLOPT_URL, url.c_str());
    curl_easy_setopt(curl, CURLOPT_USERAGENT, opts_.user_agent.c_str());
    curl_easy_setopt(curl, CURLOPT_FOLLOWLOCATION, 1L);
    curl_easy_setopt(curl, CURLOPT_TIMEOUT, opts_.timeout_seconds);
    curl_easy_setopt(curl, CURLOPT_NOSIGNAL, 1L);
    curl_easy_setopt(curl, CURLOPT_WRITEFUNCTION, collect_body);
    curl_easy_setopt(curl, CURLOPT_WRITEDATA, &body);
    ++requests_;
    const CURLcode rc = curl_easy_perform(curl);
    long status = 0;
    curl_easy_getinfo(curl, CURLINFO_RESPONSE_CODE, &status);
    curl_easy_cleanup(curl);
    if (rc != CURLE_OK) {
      last_error = curl_easy_strerror(rc);
      continue;
    }
    if (status == 200) return body;
    last_error = "HTTP " + std::to_string(status);
    // Only server-side and throttling errors are worth retrying.
    if (status < 500 && status != 429) break;
  }
  throw RuntimeFailure("tile download failed for " + url + ": " + last_error);
}

}  // namespace crashformer::tiles
