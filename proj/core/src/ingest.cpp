#include "crashformer/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>

#include "crashformer/error.hpp"
#include "csv.hpp"

namespace crashformer::ingest {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

void check_header(const csv::Reader& reader, const std::vector<std::string>& expected, const std::string& path) {
  if (reader.header() != expected) {
    throw ValidationError("'" + path + "': header mismatch; expected " + std::to_string(expected.size()) +
                          " columns '" + csv::join(expected).substr(0, 120) + "...', got " +
                          std::to_string(reader.header().size()) + " columns");
  }
}

// Streams rows through `parse_row`, collecting row-numbered diagnostics and
// enforcing the malformed-row budget.
void stream_rows(const std::string& path, const std::vector<std::string>& columns, LoadReport& report,
                 const std::function<void(const std::vector<std::string_view>&)>& parse_row) {
  csv::Reader reader(path);
  check_header(reader, columns, path);
  std::vector<std::string_view> fields;
  while (reader.next(fields)) {
    try {
      if (fields.size() != columns.size()) {
        throw ValidationError("expected " + std::to_string(columns.size()) + " fields, got " +
                              std::to_string(fields.size()));
      }
      parse_row(fields);
      ++report.accepted;
    } catch (const ValidationError& e) {
      ++report.rejected;
      report.diagnostics.push_back(path + ":" + std::to_string(reader.line_no()) + ": " + e.what());
    }
  }
  const std::size_t total = report.accepted + report.rejected;
  if (total > 0 && static_cast<double>(report.rejected) / static_cast<double>(total) > kMaxRejectedFraction) {
    std::string msg = "'" + path + "': " + std::to_string(report.rejected) + " of " + std::to_string(total) +
                      " rows malformed";
    if (!report.diagnostics.empty()) msg += " (first: " + report.diagnostics.front() + ")";
    throw ValidationError(msg);
  }
}

void check_range(double v, double lo, double hi, const char* what) {
  if (!(v >= lo && v <= hi)) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s %g outside [%g, %g]", what, v, lo, hi);
    throw ValidationError(buf);
  }
}

std::string fmt_double(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

bool is_zip(std::string_view s) {
  return s.size() == 5 && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write '" + path + "'");
  return out;
}

}  // namespace

std::string_view to_string(WeatherKind k) {
  switch (k) {
    case WeatherKind::rain: return "rain";
    case WeatherKind::fog: return "fog";
    case WeatherKind::cold: return "cold";
    case WeatherKind::snow: return "snow";
    case WeatherKind::storm: return "storm";
    case WeatherKind::hail: return "hail";
    case WeatherKind::other: return "other";
  }
  return "other";
}

WeatherKind parse_weather_kind(std::string_view s) {
  const std::string l = lower(s);
  for (auto k : {WeatherKind::rain, WeatherKind::fog, WeatherKind::cold, WeatherKind::snow, WeatherKind::storm,
                 WeatherKind::hail, WeatherKind::other}) {
    if (l == to_string(k)) return k;
  }
  throw ValidationError("unknown weather kind '" + std::string(s) + "'");
}

double parse_weather_severity(std::string_view s) {
  const std::string l = lower(s);
  if (l == "light") return 1.0;
  if (l == "moderate") return 2.0;
  if (l == "heavy") return 3.0;
  if (l == "severe") return 4.0;
  const double v = csv::parse_double(s, "severity");
  check_range(v, 1.0, 4.0, "severity");
  return v;
}

std::vector<std::string> accident_columns() {
  std::vector<std::string> cols{"timestamp", "lat", "lon", "severity"};
  for (auto n : kPoiNames) cols.push_back("poi_" + std::string(n));
  return cols;
}

std::vector<std::string> weather_columns() {
  return {"station_lat", "station_lon", "start", "end", "kind", "severity", "precipitation_mm"};
}

std::vector<std::string> demographic_columns() {
  std::vector<std::string> cols{"zip", "lat", "lon"};
  char buf[8];
  for (std::size_t i = 0; i < kDemoDim; ++i) {
    std::snprintf(buf, sizeof buf, "f%03zu", i);
    cols.emplace_back(buf);
  }
  return cols;
}

Loaded<std::vector<AccidentRecord>> load_accidents(const std::string& path) {
  Loaded<std::vector<AccidentRecord>> out;
  stream_rows(path, accident_columns(), out.report, [&](const std::vector<std::string_view>& f) {
    AccidentRecord rec;
    rec.timestamp = parse_datetime(f[0]);
    rec.lat = csv::parse_double(f[1], "lat");
    rec.lon = csv::parse_double(f[2], "lon");
    geo::validate_coordinates(rec.lat, rec.lon);
    rec.severity = csv::parse_double(f[3], "severity");
    check_range(rec.severity, 1.0, 4.0, "severity");
    for (std::size_t i = 0; i < kPoiCount; ++i) {
      const auto v = f[4 + i];
      if (v != "0" && v != "1") {
        throw ValidationError("poi_" + std::string(kPoiNames[i]) + " must be 0/1, got '" + std::string(v) + "'");
      }
      rec.poi[i] = v == "1";
    }
    out.records.push_back(rec);
  });
  return out;
}

Loaded<std::vector<WeatherRecord>> load_weather(const std::string& path) {
  Loaded<std::vector<WeatherRecord>> out;
  stream_rows(path, weather_columns(), out.report, [&](const std::vector<std::string_view>& f) {
    WeatherRecord rec;
    rec.station_lat = csv::parse_double(f[0], "station_lat");
    rec.station_lon = csv::parse_double(f[1], "station_lon");
    geo::validate_coordinates(rec.station_lat, rec.station_lon);
    rec.start = parse_datetime(f[2]);
    rec.end = parse_datetime(f[3]);
    if (rec.end < rec.start) throw ValidationError("weather end precedes start");
    rec.kind = parse_weather_kind(f[4]);
    rec.severity = parse_weather_severity(f[5]);
    rec.precipitation_mm = csv::parse_double(f[6], "precipitation_mm");
    if (!(rec.precipitation_mm >= 0.0) || !std::isfinite(rec.precipitation_mm)) {
      throw ValidationError("precipitation must be finite and >= 0");
    }
    out.records.push_back(rec);
  });
  return out;
}

Loaded<std::map<std::string, DemographicRecord>> load_demographics(const std::string& path) {
  Loaded<std::map<std::string, DemographicRecord>> out;
  std::string duplicate;
  stream_rows(path, demographic_columns(), out.report, [&](const std::vector<std::string_view>& f) {
    DemographicRecord rec;
    rec.zip = std::string(f[0]);
    if (!is_zip(rec.zip)) throw ValidationError("zip must be 5 digits, got '" + rec.zip + "'");
    rec.lat = csv::parse_double(f[1], "lat");
    rec.lon = csv::parse_double(f[2], "lon");
    geo::validate_coordinates(rec.lat, rec.lon);
    rec.features.resize(kDemoDim);
    for (std::size_t i = 0; i < kDemoDim; ++i) {
      const auto v = f[3 + i];
      const std::string l = lower(v);
      if (v.empty() || l == "na" || l == "nan") {
        rec.features[i] = std::numeric_limits<double>::quiet_NaN();
      } else {
        rec.features[i] = csv::parse_double(v, "demographic feature");
        if (!std::isfinite(rec.features[i])) throw ValidationError("non-finite demographic feature");
      }
    }
    if (out.records.contains(rec.zip)) {
      if (duplicate.empty()) duplicate = rec.zip;
      return;
    }
    out.records.emplace(rec.zip, std::move(rec));
  });
  // Duplicates are a hard error regardless of the malformed-row budget.
  if (!duplicate.empty()) throw ValidationError("'" + path + "': duplicate zip " + duplicate);
  return out;
}

std::vector<geo::ZipCentroid> zip_table(const std::map<std::string, DemographicRecord>& demo) {
  std::vector<geo::ZipCentroid> table;
  table.reserve(demo.size());
  for (const auto& [zip, rec] : demo) table.push_back({zip, rec.lat, rec.lon});
  return table;
}

void write_accidents(const std::string& path, const std::vector<AccidentRecord>& rows) {
  auto out = open_out(path);
  out << csv::join(accident_columns()) << '\n';
  for (const auto& r : rows) {
    out << format_datetime(r.timestamp) << ',' << fmt_double(r.lat) << ',' << fmt_double(r.lon) << ','
        << fmt_double(r.severity);
    for (bool b : r.poi) out << ',' << (b ? '1' : '0');
    out << '\n';
  }
}

void write_weather(const std::string& path, const std::vector<WeatherRecord>& rows) {
  auto out = open_out(path);
  out << csv::join(weather_columns()) << '\n';
  for (const auto& r : rows) {
    out << fmt_double(r.station_lat) << ',' << fmt_double(r.station_lon) << ',' << format_datetime(r.start) << ','
        << format_datetime(r.end) << ',' << to_string(r.kind) << ',' << fmt_double(r.severity) << ','
        << fmt_double(r.precipitation_mm) << '\n';
  }
}

void write_demographics(const std::string& path, const std::vector<DemographicRecord>& rows) {
  auto out = open_out(path);
  out << csv::join(demographic_columns()) << '\n';
  for (const auto& r : rows) {
    if (r.features.size() != kDemoDim) throw ValidationError("demographic record needs 144 features");
    out << r.zip << ',' << fmt_double(r.lat) << ',' << fmt_double(r.lon);
    for (double v : r.features) out << ',' << fmt_double(v);
    out << '\n';
  }
}

}  // namespace crashformer::ingest
