#pragma once

#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace crashformer::csv {

/// Minimal reader for the unquoted comma-separated files this project owns.
class Reader {
 public:
  explicit Reader(const std::string& path);

  const std::vector<std::string>& header() const { return header_; }
  /// Returns false at EOF. Blank lines are skipped. `line_no` is 1-based and
  /// counts the header as line 1.
  bool next(std::vector<std::string_view>& fields);
  std::size_t line_no() const { return line_no_; }

 private:
  std::ifstream in_;
  std::string line_;
  std::vector<std::string> header_;
  std::size_t line_no_ = 0;
};

void split(std::string_view line, std::vector<std::string_view>& out);
double parse_double(std::string_view field, const char* what);
std::string join(const std::vector<std::string>& cols);

}  // namespace crashformer::csv
