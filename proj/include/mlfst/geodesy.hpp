#pragma once

#include <algorithm>
#include <cmath>

namespace mlfst {

// Mean Earth radius in meters; fixed so distance computations are reproducible.
inline constexpr double kEarthRadiusM = 6371000.0;

inline constexpr double kPi = 3.141592653589793238462643383279502884;

inline double deg2rad(double d) { return d * (kPi / 180.0); }
inline double rad2deg(double r) { return r * (180.0 / kPi); }

// Great-circle distance between two (lat, lon) points in degrees.
// The asin argument is clamped so antipodal rounding cannot produce NaN.
inline double haversine_m(double lat1_deg, double lon1_deg, double lat2_deg, double lon2_deg) {
  const double phi1 = deg2rad(lat1_deg);
  const double phi2 = deg2rad(lat2_deg);
  const double dphi = deg2rad(lat2_deg - lat1_deg);
  const double dlam = deg2rad(lon2_deg - lon1_deg);
  const double s1 = std::sin(dphi / 2.0);
  const double s2 = std::sin(dlam / 2.0);
  double a = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  a = std::clamp(a, 0.0, 1.0);
  return 2.0 * kEarthRadiusM * std::asin(std::sqrt(a));
}

}  // namespace mlfst
