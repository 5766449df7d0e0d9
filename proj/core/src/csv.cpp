#include "csv.hpp"

#include <charconv>
#include <cmath>

#include "crashformer/error.hpp"

namespace crashformer::csv {

void split(std::string_view line, std::vector<std::string_view>& out) {
  out.clear();
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

Reader::Reader(const std::string& path) : in_(path) {
  if (!in_) throw ValidationError("cannot open '" + path + "'");
  if (!std::getline(in_, line_)) throw ValidationError("'" + path + "' has no header line");
  ++line_no_;
  if (line_.size() >= 3 && line_.compare(0, 3, "\xEF\xBB\xBF") == 0) line_.erase(0, 3);
  if (!line_.empty() && line_.back() == '\r') line_.pop_back();
  std::vector<std::string_view> cols;
  split(line_, cols);
  for (auto c : cols) header_.emplace_back(c);
}

bool Reader::next(std::vector<std::string_view>& fields) {
  while (std::getline(in_, line_)) {
    ++line_no_;
    if (!line_.empty() && line_.back() == '\r') line_.pop_back();
    if (line_.empty()) continue;
    split(line_, fields);
    return true;
  }
  return false;
}

double parse_double(std::string_view field, const char* what) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || field.empty()) {
    throw ValidationError(std::string("malformed ") + what + " '" + std::string(field) + "'");
  }
  return v;
}

std::string join(const std::vector<std::string>& cols) {
  std::string out;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (i) out += ',';
    out += cols[i];
  }
  return out;
}

}  // namespace crashformer::csv
