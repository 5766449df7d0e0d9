#include "crashformer/calendar.hpp"

#include <cstdio>

#include "crashformer/error.hpp"

namespace crashformer {

using namespace std::chrono;

namespace {

bool parse_fixed(std::string_view s, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > s.size()) return false;
  int v = 0;
  for (std::size_t i = pos; i < pos + len; ++i) {
    const char c = s[i];
    if (c < '0' || c > '9') return false;
    v = v * 10 + (c - '0');
  }
  out = v;
  return true;
}

year_month_day nth_weekday(int y, unsigned m, weekday wd, unsigned n) {
  return year_month_day{sys_days{year{y} / month{m} / wd[n]}};
}

year_month_day last_weekday(int y, unsigned m, weekday wd) {
  return year_month_day{sys_days{year{y} / month{m} / wd[last]}};
}

}  // namespace

CivilTime parse_datetime(std::string_view text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  bool ok = parse_fixed(text, 0, 4, y) && text.size() >= 10 && text[4] == '-' &&
            parse_fixed(text, 5, 2, mo) && text[7] == '-' && parse_fixed(text, 8, 2, d);
  if (ok && text.size() > 10) {
    ok = (text[10] == 'T' || text[10] == ' ') && text.size() == 19 && parse_fixed(text, 11, 2, h) &&
         text[13] == ':' && parse_fixed(text, 14, 2, mi) && text[16] == ':' &&
         parse_fixed(text, 17, 2, sec);
  }
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ok || !ymd.ok() || h > 23 || mi > 59 || sec > 59) {
    throw ValidationError("malformed datetime '" + std::string(text) + "'");
  }
  return sys_days{ymd} + hours{h} + minutes{mi} + seconds{sec};
}

std::string format_datetime(CivilTime t) {
  const auto day_start = floor<days>(t);
  const year_month_day ymd{day_start};
  const hh_mm_ss hms{t - day_start};
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ld", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                static_cast<long>(hms.seconds().count()));
  return buf;
}

year_month_day civil_date(CivilTime t) { return year_month_day{floor<days>(t)}; }

int day_of_week(year_month_day d) {
  // iso_encoding: Monday = 1 ... Sunday = 7
  return static_cast<int>(weekday{sys_days{d}}.iso_encoding()) - 1;
}

bool is_us_federal_holiday(year_month_day d) {
  const int y = static_cast<int>(d.year());
  const unsigned m = static_cast<unsigned>(d.month());
  const unsigned dd = static_cast<unsigned>(d.day());
  switch (m) {
    case 1:
      return dd == 1 || d == nth_weekday(y, 1, Monday, 3);
    case 2:
      return d == nth_weekday(y, 2, Monday, 3);
    case 5:
      return d == last_weekday(y, 5, Monday);
    case 6:
      return y >= 2021 && dd == 19;
    case 7:
      return dd == 4;
    case 9:
      return d == nth_weekday(y, 9, Monday, 1);
    case 10:
      return d == nth_weekday(y, 10, Monday, 2);
    case 11:
      return dd == 11 || d == nth_weekday(y, 11, Thursday, 4);
    case 12:
      return dd == 25;
    default:
      return false;
  }
}

}  // namespace crashformer
