///   @file percolation.hpp
///   @brief Hessian-preselected percolation with a 3D shape test.
///
/// From a seed p: P = {p}, t = I(p) + eps. Each round adds, all at once,
/// the 26-neighbors of P inside the window (L-inf distance <= W from p,
/// clipped to the volume) with I <= t, then sets t = max(max_P I, t) + eps.
/// Percolation stops when P touches a window face (L-inf distance exactly W),
/// when no candidate is left, or when a round adds nothing and t did not
/// grow (always the case for eps <= 0). If |P n H| / |P| >= f, with H the
/// preselected set, every voxel of P gains one detection; the mask keeps
/// voxels with at least max(tau, 1) detections.

#ifndef CRACKSEG_PERCOLATION_HPP
#define CRACKSEG_PERCOLATION_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "errors.hpp"
#include "parallel.hpp"
#include "volume.hpp"

namespace crackseg {

struct PercolationParams {
  double epsilon = -0.5;
  int W = 3;
  double f = 0.6;
  double tau = 4;

  void validate() const {
    if (!std::isfinite(epsilon)) throw ParameterError("percolation epsilon must be finite");
    if (W < 1) throw ParameterError("percolation window half-size W must be >= 1");
    if (!(f >= 0.0 && f <= 1.0)) throw ParameterError("percolation f must be in [0,1]");
    if (!(tau >= 0.0 && std::isfinite(tau))) throw ParameterError("percolation tau must be non-negative");
  }
};

/// Percolated set of one seed, as volume indices in order of addition.
inline std::vector<std::size_t> percolate(const Volume& vol, std::size_t seed, double epsilon, int W) {
  const Dims& d = vol.dims();
  const long sx = long(seed % d.nx), sy = long((seed / d.nx) % d.ny), sz = long(seed / (d.nx * d.ny));
  const long x0 = std::max(0L, sx - W), y0 = std::max(0L, sy - W), z0 = std::max(0L, sz - W);
  const long x1 = std::min(long(d.nx) - 1, sx + W), y1 = std::min(long(d.ny) - 1, sy + W),
             z1 = std::min(long(d.nz) - 1, sz + W);
  const long wx = x1 - x0 + 1, wy = y1 - y0 + 1, wz = z1 - z0 + 1;
  // 0 = untouched, 1 = candidate, 2 = in P
  std::vector<unsigned char> state(std::size_t(wx * wy * wz), 0);
  auto local = [&](long x, long y, long z) { return std::size_t(x - x0 + wx * ((y - y0) + wy * (z - z0))); };
  auto global = [&](long x, long y, long z) { return d.index(std::size_t(x), std::size_t(y), std::size_t(z)); };
  struct V {
    long x, y, z;
  };
  std::vector<V> cand, added;
  std::vector<std::size_t> P;
  bool contact = false;
  auto take = [&](const V& v) {
    state[local(v.x, v.y, v.z)] = 2;
    P.push_back(global(v.x, v.y, v.z));
    if (std::max({std::abs(v.x - sx), std::abs(v.y - sy), std::abs(v.z - sz)}) == W) contact = true;
  };
  auto expand = [&](const V& v) {
    for (long dz = -1; dz <= 1; ++dz)
      for (long dy = -1; dy <= 1; ++dy)
        for (long dx = -1; dx <= 1; ++dx) {
          const long x = v.x + dx, y = v.y + dy, z = v.z + dz;
          if (x < x0 || x > x1 || y < y0 || y > y1 || z < z0 || z > z1) continue;
          auto& s = state[local(x, y, z)];
          if (s == 0) s = 1, cand.push_back({x, y, z});
        }
  };
  take({sx, sy, sz});
  expand({sx, sy, sz});
  double t = double(vol[seed]) + epsilon;
  double max_p = vol[seed];
  while (!contact && !cand.empty()) {
    added.clear();
    std::size_t keep = 0;
    for (const V& c : cand) {
      if (double(vol[global(c.x, c.y, c.z)]) <= t)
        added.push_back(c);
      else
        cand[keep++] = c;
    }
    cand.resize(keep);
    for (const V& a : added) {
      take(a);
      max_p = std::max(max_p, double(vol[global(a.x, a.y, a.z)]));
    }
    for (const V& a : added) expand(a);
    const double t_new = std::max(max_p, t) + epsilon;
    if (added.empty() && !(t_new > t)) break;
    t = t_new;
  }
  return P;
}

/// Per-voxel detection counts.
inline std::vector<std::uint32_t> percolation_counts(const Volume& vol, const BinaryMask& preselect,
                                                     const PercolationParams& p) {
  p.validate();
  require_same_dims(vol.dims(), preselect.dims(), "percolation preselection");
  std::vector<std::size_t> seeds;
  preselect.for_each_set([&](std::size_t i) { seeds.push_back(i); });
  const std::size_t chunks = std::max<std::size_t>(1, std::min<std::size_t>(num_threads(), seeds.size()));
  std::vector<std::vector<std::uint32_t>> partial(chunks);
  parallel_for(0, chunks, [&](std::size_t c) {
    auto& cnt = partial[c];
    cnt.assign(vol.size(), 0);
    for (std::size_t k = seeds.size() * c / chunks; k < seeds.size() * (c + 1) / chunks; ++k) {
      const auto P = percolate(vol, seeds[k], p.epsilon, p.W);
      std::size_t hits = 0;
      for (std::size_t q : P) hits += preselect.get(q);
      if (double(hits) / double(P.size()) >= p.f)
        for (std::size_t q : P) ++cnt[q];
    }
  });
  std::vector<std::uint32_t> total(vol.size(), 0);
  for (const auto& cnt : partial)
    for (std::size_t i = 0; i < cnt.size(); ++i) total[i] += cnt[i];
  return total;
}

inline BinaryMask counts_to_mask(const std::vector<std::uint32_t>& counts, Dims dims, double tau) {
  BinaryMask m(dims);
  const double need = std::max(tau, 1.0);
  for (std::size_t i = 0; i < counts.size(); ++i)
    if (double(counts[i]) >= need) m.set(i);
  return m;
}

inline BinaryMask hessian_percolation(const Volume& vol, const BinaryMask& preselect, const PercolationParams& p) {
  return counts_to_mask(percolation_counts(vol, preselect, p), vol.dims(), p.tau);
}

}  // namespace crackseg

#endif  // CRACKSEG_PERCOLATION_HPP
