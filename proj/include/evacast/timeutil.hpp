#pragma once

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace evacast {

// All timestamps in this project are naive local civil time at hourly
// granularity, stored as whole hours since 1970-01-01T00:00.
using EpochHour = std::int64_t;

struct CivilDate {
  int year;
  unsigned month;  // 1..12
  unsigned day;    // 1..31
};

namespace timedetail {

// Days since 1970-01-01 for a civil date (proleptic Gregorian).
inline std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline CivilDate civil_from_days(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp + (mp < 10 ? 3 : -9);
  return {static_cast<int>(y + (m <= 2)), m, d};
}

}  // namespace timedetail

inline EpochHour make_epoch_hour(int year, unsigned month, unsigned day, unsigned hour) {
  return timedetail::days_from_civil(year, month, day) * 24 + static_cast<std::int64_t>(hour);
}

inline CivilDate civil_date_of(EpochHour h) {
  std::int64_t d = h / 24;
  if (h < 0 && h % 24 != 0) --d;
  return timedetail::civil_from_days(d);
}

// Hour of day, 0..23.
inline int hour_of_day(EpochHour h) {
  std::int64_t r = h % 24;
  if (r < 0) r += 24;
  return static_cast<int>(r);
}

inline std::int64_t day_index(EpochHour h) {
  std::int64_t d = h / 24;
  if (h < 0 && h % 24 != 0) --d;
  return d;
}

// 0 = Sunday .. 6 = Saturday. 1970-01-01 was a Thursday.
inline int day_of_week(EpochHour h) {
  std::int64_t d = day_index(h);
  std::int64_t w = (d + 4) % 7;
  if (w < 0) w += 7;
  return static_cast<int>(w);
}

inline bool is_weekend(EpochHour h) {
  const int w = day_of_week(h);
  return w == 0 || w == 6;
}

// Parses "YYYY-MM-DDTHH:MM:SS" or the date-only / hour-only prefixes of it.
// A space is accepted in place of the 'T'. Minutes and seconds must be zero
// when present, since the data model is hourly.
inline EpochHour parse_timestamp(const std::string& s) {
  int y = 0;
  unsigned mo = 0, d = 0, hh = 0, mi = 0, ss = 0;
  char sep = 'T';
  int n = std::sscanf(s.c_str(), "%d-%u-%u%c%u:%u:%u", &y, &mo, &d, &sep, &hh, &mi, &ss);
  if (n < 3 || (n >= 4 && sep != 'T' && sep != ' '))
    throw std::invalid_argument("unparseable timestamp: '" + s + "'");
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || hh > 23)
    throw std::invalid_argument("timestamp out of range: '" + s + "'");
  if (mi != 0 || ss != 0)
    throw std::invalid_argument("timestamps must be on the hour: '" + s + "'");
  return make_epoch_hour(y, mo, d, hh);
}

inline std::string format_timestamp(EpochHour h) {
  const CivilDate c = civil_date_of(h);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:00:00", c.year, c.month, c.day,
                hour_of_day(h));
  return std::string(buf);
}

}  // namespace evacast
