///   @file directions.hpp
///   @brief Near-uniform direction sets on the upper hemisphere.
///
/// Latitude bands at polar angles i * dt, i = 0..m, with dt chosen so that
/// the hemisphere holds about n(n/4+1) points of equal area; the points are
/// shared among the bands in proportion to their circumference. The
/// equator band covers only [0, pi) since d and -d describe the same axis.
/// The pole and the three coordinate axes are always members.

#ifndef CRACKSEG_DIRECTIONS_HPP
#define CRACKSEG_DIRECTIONS_HPP

#include <cmath>
#include <numbers>
#include <vector>

#include "errors.hpp"
#include "hessian.hpp"

namespace crackseg {

struct DirectionSet {
  int n = 0;
  std::vector<Vec3> dirs;
};

inline DirectionSet sphere_directions(int n) {
  if (n < 4) throw ParameterError("direction discretization n must be >= 4");
  constexpr double pi = std::numbers::pi;
  const double target = n * (n / 4.0 + 1.0);
  const double step = std::sqrt(2.0 * pi / target);
  const int bands = std::max(1, int(std::lround(0.5 * pi / step)));
  const double dt = 0.5 * pi / bands;
  // Remaining points are shared among the bands in proportion to their
  // circumference (the equator band counts half).
  std::vector<double> weight(bands + 1, 0.0);
  double total = 0.0;
  for (int i = 1; i <= bands; ++i) total += weight[i] = i < bands ? 2.0 * pi * std::sin(i * dt) : pi;
  DirectionSet s;
  s.n = n;
  s.dirs.push_back({0.0, 0.0, 1.0});
  for (int i = 1; i <= bands; ++i) {
    const double theta = i * dt;
    const double share = (target - 1.0) * weight[i] / total;
    int count;
    double span;
    if (i < bands) {
      // Multiples of 4 keep each band invariant under quarter turns about z.
      count = std::max(4, 4 * int(std::lround(share / 4.0)));
      span = 2.0 * pi;
    } else {
      count = std::max(2, 2 * int(std::lround(share / 2.0)));
      span = pi;
    }
    const double st = i == bands ? 1.0 : std::sin(theta), ct = i == bands ? 0.0 : std::cos(theta);
    for (int j = 0; j < count; ++j) {
      const double phi = span * j / count;
      s.dirs.push_back({st * std::cos(phi), st * std::sin(phi), ct});
    }
  }
  return s;
}

/// Orthonormal frame (u, v, d) with d the given unit normal.
inline std::array<Vec3, 3> frame_for(const Vec3& d) {
  const Vec3 u = detail::any_orthogonal(d);
  const Vec3 v = detail::cross(d, u);
  return {u, v, d};
}

}  // namespace crackseg

#endif  // CRACKSEG_DIRECTIONS_HPP
