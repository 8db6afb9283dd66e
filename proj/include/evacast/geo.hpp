#pragma once

#include <cmath>

namespace evacast {

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;
};

// Great-circle distance in miles (haversine, mean-earth radius).
inline double haversine_miles(const LatLon& a, const LatLon& b) {
  constexpr double kEarthRadiusMiles = 3958.7613;
  constexpr double kDeg = 3.14159265358979323846 / 180.0;
  const double dlat = (b.lat - a.lat) * kDeg;
  const double dlon = (b.lon - a.lon) * kDeg;
  const double s1 = std::sin(dlat / 2.0);
  const double s2 = std::sin(dlon / 2.0);
  const double h = s1 * s1 + std::cos(a.lat * kDeg) * std::cos(b.lat * kDeg) * s2 * s2;
  return 2.0 * kEarthRadiusMiles * std::asin(std::sqrt(h < 0.0 ? 0.0 : (h > 1.0 ? 1.0 : h)));
}

}  // namespace evacast
