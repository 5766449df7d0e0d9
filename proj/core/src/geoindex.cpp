#include "crashformer/geoindex.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <tuple>

#include "crashformer/error.hpp"

namespace crashformer::geo {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kRadToDeg = 180.0 / std::numbers::pi;
constexpr double kSqrt3 = 1.7320508075688772;

constexpr int kAxialBits = 30;
constexpr std::int64_t kAxialBias = std::int64_t{1} << (kAxialBits - 1);
constexpr std::uint64_t kAxialMask = (std::uint64_t{1} << kAxialBits) - 1;
constexpr double kMaxMercatorLat = 85.0511287798066;

std::pair<std::int64_t, std::int64_t> cube_round(double qf, double rf) {
  const double sf = -qf - rf;
  double q = std::round(qf);
  double r = std::round(rf);
  const double s = std::round(sf);
  const double dq = std::abs(q - qf);
  const double dr = std::abs(r - rf);
  const double ds = std::abs(s - sf);
  if (dq > dr && dq > ds) {
    q = -r - s;
  } else if (dr > ds) {
    r = -q - s;
  }
  return {static_cast<std::int64_t>(q), static_cast<std::int64_t>(r)};
}

}  // namespace

void validate_coordinates(double lat, double lon) {
  if (!std::isfinite(lat) || !std::isfinite(lon) || lat < -90.0 || lat > 90.0 || lon < -180.0 ||
      lon > 180.0) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "coordinates out of WGS84 range: (%.8f, %.8f)", lat, lon);
    throw ValidationError(buf);
  }
}

std::string RegionId::str() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(cell));
  return buf;
}

RegionId RegionId::parse(const std::string& text) {
  if (text.size() != 16 ||
      !std::all_of(text.begin(), text.end(), [](char c) { return std::isxdigit(static_cast<unsigned char>(c)); })) {
    throw ValidationError("malformed region id '" + text + "'");
  }
  RegionId id{std::stoull(text, nullptr, 16), kResolution};
  id.resolution = static_cast<int>(id.cell >> 60);
  if (id.resolution != kResolution) throw ValidationError("region id '" + text + "' is not resolution 7");
  return id;
}

double haversine_km(LatLon a, LatLon b) {
  const double p1 = a.lat * kDegToRad;
  const double p2 = b.lat * kDegToRad;
  const double dp = p2 - p1;
  const double dl = (b.lon - a.lon) * kDegToRad;
  const double h = std::sin(dp / 2) * std::sin(dp / 2) + std::cos(p1) * std::cos(p2) * std::sin(dl / 2) * std::sin(dl / 2);
  return 2.0 * kEarthRadiusKm * std::atan2(std::sqrt(h), std::sqrt(std::max(0.0, 1.0 - h)));
}

HexGrid::HexGrid(LatLon origin) : origin_(origin) {
  validate_coordinates(origin.lat, origin.lon);
  sin_lat0_ = std::sin(origin.lat * kDegToRad);
  cos_lat0_ = std::cos(origin.lat * kDegToRad);
}

std::pair<double, double> HexGrid::project(LatLon p) const {
  const double phi = p.lat * kDegToRad;
  const double dl = (p.lon - origin_.lon) * kDegToRad;
  const double xd = std::cos(phi) * std::sin(dl);
  const double yd = cos_lat0_ * std::sin(phi) - sin_lat0_ * std::cos(phi) * std::cos(dl);
  const double norm = std::hypot(xd, yd);
  if (norm < 1e-300) return {0.0, 0.0};
  const double c = haversine_km(origin_, p) / kEarthRadiusKm;
  return {kEarthRadiusKm * c * xd / norm, kEarthRadiusKm * c * yd / norm};
}

LatLon HexGrid::unproject(double x_km, double y_km) const {
  const double rho = std::hypot(x_km, y_km);
  if (rho < 1e-12) return origin_;
  const double c = rho / kEarthRadiusKm;
  const double sc = std::sin(c);
  const double cc = std::cos(c);
  const double phi = std::asin(std::clamp(cc * sin_lat0_ + y_km * sc * cos_lat0_ / rho, -1.0, 1.0));
  double lon = origin_.lon + kRadToDeg * std::atan2(x_km * sc, rho * cos_lat0_ * cc - y_km * sin_lat0_ * sc);
  if (lon > 180.0) lon -= 360.0;
  if (lon < -180.0) lon += 360.0;
  return {phi * kRadToDeg, lon};
}

RegionId HexGrid::from_axial(std::int64_t q, std::int64_t r) {
  const auto uq = static_cast<std::uint64_t>(q + kAxialBias) & kAxialMask;
  const auto ur = static_cast<std::uint64_t>(r + kAxialBias) & kAxialMask;
  return RegionId{(std::uint64_t{kResolution} << 60) | (uq << kAxialBits) | ur, kResolution};
}

std::pair<std::int64_t, std::int64_t> HexGrid::axial(RegionId r) {
  const auto uq = static_cast<std::int64_t>((r.cell >> kAxialBits) & kAxialMask);
  const auto ur = static_cast<std::int64_t>(r.cell & kAxialMask);
  return {uq - kAxialBias, ur - kAxialBias};
}

RegionId HexGrid::locate_region(double lat, double lon) const {
  validate_coordinates(lat, lon);
  const auto [x, y] = project({lat, lon});
  // flat-top axial layout
  const double qf = (2.0 / 3.0) * x / kEdgeKm;
  const double rf = (-x / 3.0 + kSqrt3 / 3.0 * y) / kEdgeKm;
  const auto [q, r] = cube_round(qf, rf);
  return from_axial(q, r);
}

LatLon HexGrid::region_center(RegionId r) const {
  if (r.resolution != kResolution || (r.cell >> 60) != kResolution) {
    throw ValidationError("invalid region id " + r.str());
  }
  const auto [q, rr] = axial(r);
  const double x = kEdgeKm * 1.5 * static_cast<double>(q);
  const double y = kEdgeKm * kSqrt3 * (static_cast<double>(rr) + static_cast<double>(q) / 2.0);
  return unproject(x, y);
}

std::string assign_zip(const HexGrid& grid, RegionId r, std::span<const ZipCentroid> table) {
  if (table.empty()) throw ValidationError("assign_zip: empty zip table");
  const LatLon c = grid.region_center(r);
  const ZipCentroid* best = nullptr;
  double best_d = 0.0;
  for (const auto& z : table) {
    const double d = haversine_km(c, {z.lat, z.lon});
    if (best == nullptr || std::tie(d, z.zip) < std::tie(best_d, best->zip)) {
      best = &z;
      best_d = d;
    }
  }
  return best->zip;
}

TileCoord tile_coords(double lat, double lon, int zoom) {
  validate_coordinates(lat, lon);
  if (std::abs(lat) >= kMaxMercatorLat) {
    throw ValidationError("latitude " + std::to_string(lat) + " outside Web-Mercator range");
  }
  if (zoom < 0 || zoom > 30) throw ValidationError("zoom out of range");
  const double n = std::ldexp(1.0, zoom);
  const double lat_rad = lat * kDegToRad;
  const auto last = static_cast<std::int64_t>(n) - 1;
  auto x = static_cast<std::int64_t>(std::floor((lon + 180.0) / 360.0 * n));
  auto y = static_cast<std::int64_t>(
      std::floor((1.0 - std::asinh(std::tan(lat_rad)) / std::numbers::pi) / 2.0 * n));
  return TileCoord{zoom, std::clamp<std::int64_t>(x, 0, last), std::clamp<std::int64_t>(y, 0, last)};
}

}  // namespace crashformer::geo
