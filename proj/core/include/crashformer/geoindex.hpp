#pragma once

#include <cstdint>
#include <compare>
#include <span>
#include <string>
#include <vector>

namespace crashformer::geo {

inline constexpr double kEarthRadiusKm = 6371.0088;
inline constexpr int kResolution = 7;
/// Hexagon edge length at resolution 7. Circumradius equals the edge.
inline constexpr double kEdgeKm = 2.604;
inline constexpr int kTileZoom = 14;

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;
};

/// Opaque hexagonal cell. The 64-bit index packs the resolution in the top
/// nibble and biased axial (q, r) coordinates below it.
struct RegionId {
  std::uint64_t cell = 0;
  int resolution = kResolution;

  friend bool operator==(const RegionId&, const RegionId&) = default;
  friend auto operator<=>(const RegionId& a, const RegionId& b) { return a.cell <=> b.cell; }

  /// 16 lowercase hex digits, e.g. "7020000002000000".
  std::string str() const;
  static RegionId parse(const std::string& text);
};

struct ZipCentroid {
  std::string zip;
  double lat = 0.0;
  double lon = 0.0;
};

struct TileCoord {
  int zoom = kTileZoom;
  std::int64_t x = 0;
  std::int64_t y = 0;

  friend bool operator==(const TileCoord&, const TileCoord&) = default;
};

double haversine_km(LatLon a, LatLon b);

/// Hexagonal grid of fixed edge length laid over an azimuthal-equidistant
/// projection centred on `origin`. Every region of a study must be indexed
/// with the same grid.
class HexGrid {
 public:
  explicit HexGrid(LatLon origin = {0.0, 0.0});

  LatLon origin() const { return origin_; }

  RegionId locate_region(double lat, double lon) const;
  LatLon region_center(RegionId r) const;

  /// Axial coordinates of a cell; exposed for tests and the synthetic world.
  static std::pair<std::int64_t, std::int64_t> axial(RegionId r);
  static RegionId from_axial(std::int64_t q, std::int64_t r);

  /// Planar coordinates (km) of a point in the grid's projection.
  std::pair<double, double> project(LatLon p) const;
  LatLon unproject(double x_km, double y_km) const;

 private:
  LatLon origin_;
  double sin_lat0_;
  double cos_lat0_;
};

/// Zip whose centroid is nearest (haversine) to the region centre; ties go to
/// the lexicographically smallest zip.
std::string assign_zip(const HexGrid& grid, RegionId r, std::span<const ZipCentroid> table);

TileCoord tile_coords(double lat, double lon, int zoom = kTileZoom);

void validate_coordinates(double lat, double lon);

}  // namespace crashformer::geo
