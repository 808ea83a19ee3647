///   @file adaptive_morph.hpp
///   @brief Adaptive plane morphology with cone-restricted orientation search.
///
/// Works on the inverted image (cracks bright). Per voxel the normal is the
/// eigenvector of the largest-magnitude Hessian eigenvalue; among the
/// directions within delta_max of it (axially, d ~ -d) the plate median
/// over (2N+1)^2 voxels orthogonal to the direction is maximized, then the
/// median over 2N+1 voxels along the winning direction is subtracted. The
/// mask keeps voxels whose difference exceeds mean + k std of the
/// difference volume (population std); a zero std gives an empty mask.

#ifndef CRACKSEG_ADAPTIVE_MORPH_HPP
#define CRACKSEG_ADAPTIVE_MORPH_HPP

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "convolution.hpp"
#include "directions.hpp"
#include "errors.hpp"
#include "hessian.hpp"
#include "parallel.hpp"
#include "volume.hpp"

namespace crackseg {

struct AdaptiveMorphParams {
  double sigma = 1.0;  ///< 0 selects finite differences
  int N = 3;
  int n = 20;
  double delta_max = 0.5;
  double k = 4.5;

  void validate() const {
    check_scale(sigma, "adaptive sigma");
    if (N < 1) throw ParameterError("adaptive plate half-length N must be >= 1");
    if (n < 4) throw ParameterError("adaptive direction discretization n must be >= 4");
    if (!(delta_max > 0.0 && delta_max < 0.5 * std::numbers::pi))
      throw ParameterError("adaptive delta_max must be in (0, pi/2)");
    if (!std::isfinite(k)) throw ParameterError("adaptive k must be finite");
  }
};

namespace detail {

inline std::vector<Offset3> plate_offsets(const Vec3& d, int N) {
  const auto f = frame_for(d);
  std::vector<Offset3> out;
  for (int j = -N; j <= N; ++j)
    for (int i = -N; i <= N; ++i)
      out.push_back({int(std::lround(i * f[0][0] + j * f[1][0])), int(std::lround(i * f[0][1] + j * f[1][1])),
                     int(std::lround(i * f[0][2] + j * f[1][2]))});
  return out;
}

inline std::vector<Offset3> line_offsets(const Vec3& d, int N) {
  std::vector<Offset3> out;
  for (int t = -N; t <= N; ++t)
    out.push_back({int(std::lround(t * d[0])), int(std::lround(t * d[1])), int(std::lround(t * d[2]))});
  return out;
}

inline float median_at(const Volume& v, std::size_t x, std::size_t y, std::size_t z, const std::vector<Offset3>& offs,
                       std::vector<float>& buf) {
  const Dims& d = v.dims();
  buf.clear();
  for (const auto& o : offs)
    buf.push_back(v.at(mirror_index(long(x) + o[0], d.nx), mirror_index(long(y) + o[1], d.ny),
                       mirror_index(long(z) + o[2], d.nz)));
  auto mid = buf.begin() + long(buf.size() / 2);
  std::nth_element(buf.begin(), mid, buf.end());
  return *mid;
}

}  // namespace detail

/// Plate-minus-line difference volume.
inline Volume adaptive_difference(const Volume& vol, const AdaptiveMorphParams& p) {
  p.validate();
  if (vol.empty()) throw ParameterError("adaptive morphology of an empty volume");
  const Volume inv = invert(vol);
  const EigenField ef = eigenvalues3(hessian(vol, p.sigma), true);
  const auto dirs = sphere_directions(p.n).dirs;
  std::vector<std::vector<Offset3>> plates, lines;
  for (const auto& d : dirs) {
    plates.push_back(detail::plate_offsets(d, p.N));
    lines.push_back(detail::line_offsets(d, p.N));
  }
  const double cos_max = std::cos(p.delta_max);
  const Dims dm = vol.dims();
  Volume diff(dm);
  parallel_for(0, dm.nz, [&](std::size_t z) {
    std::vector<float> buf;
    std::vector<std::size_t> cand;
    for (std::size_t y = 0; y < dm.ny; ++y)
      for (std::size_t x = 0; x < dm.nx; ++x) {
        const std::size_t i = dm.index(x, y, z);
        cand.clear();
        if (std::abs(ef.lambda[2][i]) > 0.0f) {
          const Vec3 nrm{(*ef.principal)[0][i], (*ef.principal)[1][i], (*ef.principal)[2][i]};
          double best_dot = -1.0;
          std::size_t nearest = 0;
          for (std::size_t k = 0; k < dirs.size(); ++k) {
            const double c = std::abs(detail::dot(nrm, dirs[k]));
            if (c >= cos_max) cand.push_back(k);
            if (c > best_dot) best_dot = c, nearest = k;
          }
          if (cand.empty()) cand.push_back(nearest);
        } else {
          for (std::size_t k = 0; k < dirs.size(); ++k) cand.push_back(k);
        }
        float best = -std::numeric_limits<float>::infinity();
        std::size_t arg = cand.front();
        for (std::size_t k : cand) {
          const float m = detail::median_at(inv, x, y, z, plates[k], buf);
          if (m > best) best = m, arg = k;
        }
        diff[i] = best - detail::median_at(inv, x, y, z, lines[arg], buf);
      }
  });
  return diff;
}

inline BinaryMask adaptive_threshold(const Volume& diff, double k) {
  BinaryMask m(diff.dims());
  double sum = 0.0, sq = 0.0;
  for (float v : diff.samples()) sum += v;
  const double mean = sum / double(diff.size());
  for (float v : diff.samples()) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / double(diff.size()));
  if (!(sd > 0.0)) return m;
  const double t5 = mean + k * sd;
  for (std::size_t i = 0; i < diff.size(); ++i)
    if (double(diff[i]) > t5) m.set(i);
  return m;
}

inline BinaryMask adaptive_morph(const Volume& vol, const AdaptiveMorphParams& p) {
  return adaptive_threshold(adaptive_difference(vol, p), p.k);
}

}  // namespace crackseg

#endif  // CRACKSEG_ADAPTIVE_MORPH_HPP
