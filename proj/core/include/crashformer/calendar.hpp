#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace crashformer {

/// Local civil time of the study city, stored on the system clock's
/// second grid. No time-zone conversion is ever applied.
using CivilTime = std::chrono::sys_seconds;

/// Accepts `YYYY-MM-DDTHH:MM:SS` (or a space separator, or a bare date).
CivilTime parse_datetime(std::string_view text);
std::string format_datetime(CivilTime t);

std::chrono::year_month_day civil_date(CivilTime t);

/// Monday = 0 ... Sunday = 6.
int day_of_week(std::chrono::year_month_day d);

/// US federal holidays by rule (fixed dates and nth/last weekday rules), with
/// no observed-day shifting. Juneteenth counts from 2021 onwards.
bool is_us_federal_holiday(std::chrono::year_month_day d);

}  // namespace crashformer
