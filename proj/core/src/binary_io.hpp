#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "crashformer/error.hpp"

// Little-endian flat array files.
namespace crashformer::bin {

static_assert(std::endian::native == std::endian::little, "blob I/O assumes a little-endian host");

template <typename T>
void write_array(const std::string& path, std::span<const T> values) {
  static_assert(std::is_arithmetic_v<T>);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  if (!out) throw RuntimeFailure("short write to '" + path + "'");
}

/// Reads exactly `count` elements; any other byte length is an error.
template <typename T>
std::vector<T> read_array(const std::string& path, std::size_t count) {
  static_assert(std::is_arithmetic_v<T>);
  std::error_code ec;
  const auto bytes = std::filesystem::file_size(path, ec);
  if (ec) throw ValidationError("cannot stat '" + path + "'");
  if (bytes != count * sizeof(T)) {
    throw ValidationError("length mismatch in '" + path + "': expected " + std::to_string(count * sizeof(T)) +
                          " bytes, found " + std::to_string(bytes));
  }
  std::vector<T> values(count);
  std::ifstream in(path, std::ios::binary);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw ValidationError("truncated blob '" + path + "'");
  return values;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write '" + path + "'");
  out << text;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace crashformer::bin
