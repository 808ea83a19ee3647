///   @file minimal_paths.hpp
///   @brief Greedy local minimal paths and a path coherence classifier.
///
/// Eighteen direction classes (6 axis, 12 plane diagonals) each own the 9
/// offsets o of the 26-neighborhood with o.d >= 1. An arm starting at p
/// repeatedly steps to the darkest in-volume neighbor of its class (ties:
/// lowest lexicographic offset) for at most ell steps; every step
/// increases o.d, so arms never revisit a voxel. The two arms of an
/// opposite pair plus p form one of 9 local paths. With path- the path of
/// lowest mean and path+ the path of highest mean, h is the two-sided
/// p-value of Welch's t-test between their grayvalues, and voxels with
/// h <= t3 are cracks.

#ifndef CRACKSEG_MINIMAL_PATHS_HPP
#define CRACKSEG_MINIMAL_PATHS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "errors.hpp"
#include "parallel.hpp"
#include "volume.hpp"

namespace crackseg {

struct MinimalPathParams {
  int ell = 12;
  double t3 = 1e-4;

  void validate() const {
    if (ell < 2) throw ParameterError("minimal path length ell must be >= 2");
    if (!(t3 >= 0.0 && t3 <= 1.0)) throw ParameterError("minimal path threshold t3 must be in [0,1]");
  }
};

struct PathNeighborhoods {
  std::array<Offset3, 18> directions;             ///< class k and k ^ 1 are opposite
  std::array<std::array<Offset3, 9>, 18> offsets;  ///< lexicographic order
};

inline const PathNeighborhoods& path_neighborhoods() {
  static const PathNeighborhoods nb = [] {
    PathNeighborhoods n{};
    std::size_t k = 0;
    auto add = [&](Offset3 d) {
      n.directions[k] = d;
      n.directions[k + 1] = {-d[0], -d[1], -d[2]};
      k += 2;
    };
    add({1, 0, 0});
    add({0, 1, 0});
    add({0, 0, 1});
    add({1, 1, 0});
    add({1, -1, 0});
    add({1, 0, 1});
    add({1, 0, -1});
    add({0, 1, 1});
    add({0, 1, -1});
    for (std::size_t c = 0; c < 18; ++c) {
      std::size_t m = 0;
      const Offset3& d = n.directions[c];
      for (int x = -1; x <= 1; ++x)
        for (int y = -1; y <= 1; ++y)
          for (int z = -1; z <= 1; ++z)
            if (x * d[0] + y * d[1] + z * d[2] >= 1) n.offsets[c][m++] = {x, y, z};
    }
    return n;
  }();
  return nb;
}

/// next[i] = index of the greedy successor of voxel i in class c, or -1 at
/// the border.
inline std::vector<std::int64_t> next_pointers(const Volume& vol, std::size_t c) {
  const Dims& d = vol.dims();
  const auto& offs = path_neighborhoods().offsets[c];
  std::vector<std::int64_t> next(vol.size(), -1);
  parallel_for(0, d.nz, [&](std::size_t z) {
    for (std::size_t y = 0; y < d.ny; ++y)
      for (std::size_t x = 0; x < d.nx; ++x) {
        float best = 0.0f;
        std::int64_t arg = -1;
        for (const auto& o : offs) {
          const long qx = long(x) + o[0], qy = long(y) + o[1], qz = long(z) + o[2];
          if (qx < 0 || qy < 0 || qz < 0 || qx >= long(d.nx) || qy >= long(d.ny) || qz >= long(d.nz)) continue;
          const std::size_t q = d.index(std::size_t(qx), std::size_t(qy), std::size_t(qz));
          if (arg < 0 || vol[q] < best) best = vol[q], arg = std::int64_t(q);
        }
        next[d.index(x, y, z)] = arg;
      }
  });
  return next;
}

/// Voxels of the arm from p (p excluded), following `next` for up to ell steps.
inline std::vector<std::size_t> trace_arm(const std::vector<std::int64_t>& next, std::size_t p, int ell) {
  std::vector<std::size_t> arm;
  std::int64_t q = std::int64_t(p);
  for (int s = 0; s < ell; ++s) {
    q = next[std::size_t(q)];
    if (q < 0) break;
    arm.push_back(std::size_t(q));
  }
  return arm;
}

/// Sample statistics of one local path.
struct PathStats {
  double mean = 0.0;
  double var = 0.0;  // unbiased
  std::size_t n = 0;
};

/// Two-sided Welch test p-value contrasting the darkest and brightest path.
/// 1 when the paths are indistinguishable, near 0 for a clear contrast.
inline double coherence(const PathStats& lo, const PathStats& hi) {
  if (lo.n < 2 || hi.n < 2) return 1.0;
  const double dm = std::abs(hi.mean - lo.mean);
  const double a = lo.var / double(lo.n), b = hi.var / double(hi.n);
  const double se2 = a + b;
  if (!(se2 > 0.0)) return dm > 0.0 ? 0.0 : 1.0;
  const double t = dm / std::sqrt(se2);
  const double df = se2 * se2 / (a * a / double(lo.n - 1) + b * b / double(hi.n - 1));
  const boost::math::students_t dist(df);
  return std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, t)), 0.0, 1.0);
}

/// Coherence h per voxel.
inline Volume minimal_path_coherence(const Volume& vol, const MinimalPathParams& p) {
  p.validate();
  const std::size_t n = vol.size();
  std::vector<PathStats> lo(n), hi(n);
  const Dims& d = vol.dims();
  for (std::size_t pair = 0; pair < 9; ++pair) {
    const auto fwd = next_pointers(vol, 2 * pair), bwd = next_pointers(vol, 2 * pair + 1);
    parallel_for(0, d.nz, [&](std::size_t z) {
      const std::size_t plane = d.nx * d.ny;
      for (std::size_t i = z * plane; i < (z + 1) * plane; ++i) {
        double sum = vol[i], sq = double(vol[i]) * vol[i];
        std::size_t cnt = 1;
        for (const auto* next : {&fwd, &bwd}) {
          std::int64_t q = std::int64_t(i);
          for (int s = 0; s < p.ell; ++s) {
            q = (*next)[std::size_t(q)];
            if (q < 0) break;
            const double v = vol[std::size_t(q)];
            sum += v;
            sq += v * v;
            ++cnt;
          }
        }
        PathStats st;
        st.n = cnt;
        st.mean = sum / double(cnt);
        st.var = cnt > 1 ? std::max(0.0, (sq - sum * st.mean) / double(cnt - 1)) : 0.0;
        if (pair == 0 || st.mean < lo[i].mean) lo[i] = st;
        if (pair == 0 || st.mean > hi[i].mean) hi[i] = st;
      }
    });
  }
  Volume h(d);
  parallel_for(0, n, [&](std::size_t i) { h[i] = float(coherence(lo[i], hi[i])); });
  return h;
}

inline BinaryMask minimal_paths(const Volume& vol, const MinimalPathParams& p) {
  const Volume h = minimal_path_coherence(vol, p);
  BinaryMask m(vol.dims());
  for (std::size_t i = 0; i < h.size(); ++i)
    if (double(h[i]) <= p.t3) m.set(i);
  return m;
}

}  // namespace crackseg

#endif  // CRACKSEG_MINIMAL_PATHS_HPP
