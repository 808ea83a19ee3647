///   @file hessian.hpp
///   @brief Scale-space Hessian and a closed-form symmetric 3x3 eigen-solver.
///
/// Eigenvalues are reported in the order |l1| <= |l2| <= |l3|. A dark sheet
/// in a bright background gives l3 >> |l1|, |l2| with l3 > 0 across the sheet.

#ifndef CRACKSEG_HESSIAN_HPP
#define CRACKSEG_HESSIAN_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "convolution.hpp"
#include "errors.hpp"
#include "parallel.hpp"
#include "volume.hpp"

namespace crackseg {

/// Factor applied to the Gaussian second derivatives.
enum class ScaleNormalization {
  linear,     ///< multiply by sigma
  quadratic,  ///< multiply by sigma^2 (Lindeberg normalization)
  none,
};

/// Symmetric Hessian field; only the six unique entries are stored.
struct HessianField {
  double sigma = 0.0;
  Dims dims;
  // xx, xy, xz, yy, yz, zz
  std::array<Volume, 6> entries;

  static constexpr int slot(int i, int j) {
    if (i > j) std::swap(i, j);
    constexpr int table[3][3] = {{0, 1, 2}, {1, 3, 4}, {2, 4, 5}};
    return table[i][j];
  }
  /// h_ij; h(i,j) and h(j,i) refer to the same storage.
  const Volume& h(int i, int j) const { return entries[slot(i, j)]; }
  Volume& h(int i, int j) { return entries[slot(i, j)]; }
};

namespace detail {

// Central second differences with mirrored borders.
inline HessianField finite_difference_hessian(const Volume& vol) {
  const Dims d = vol.dims();
  HessianField hf;
  hf.sigma = 0.0;
  hf.dims = d;
  for (auto& e : hf.entries) e = Volume(d);
  const long n[3] = {long(d.nx), long(d.ny), long(d.nz)};
  auto sample = [&](long x, long y, long z) {
    return vol.at(mirror_index(x, d.nx), mirror_index(y, d.ny), mirror_index(z, d.nz));
  };
  parallel_for(0, d.nz, [&](std::size_t zz) {
    const long z = long(zz);
    for (long y = 0; y < n[1]; ++y)
      for (long x = 0; x < n[0]; ++x) {
        const std::size_t i = d.index(x, y, z);
        const float c = sample(x, y, z);
        hf.entries[0][i] = sample(x + 1, y, z) - 2 * c + sample(x - 1, y, z);
        hf.entries[3][i] = sample(x, y + 1, z) - 2 * c + sample(x, y - 1, z);
        hf.entries[5][i] = sample(x, y, z + 1) - 2 * c + sample(x, y, z - 1);
        hf.entries[1][i] = 0.25f * (sample(x + 1, y + 1, z) - sample(x + 1, y - 1, z) - sample(x - 1, y + 1, z) +
                                    sample(x - 1, y - 1, z));
        hf.entries[2][i] = 0.25f * (sample(x + 1, y, z + 1) - sample(x + 1, y, z - 1) - sample(x - 1, y, z + 1) +
                                    sample(x - 1, y, z - 1));
        hf.entries[4][i] = 0.25f * (sample(x, y + 1, z + 1) - sample(x, y + 1, z - 1) - sample(x, y - 1, z + 1) +
                                    sample(x, y - 1, z - 1));
      }
  });
  return hf;
}

}  // namespace detail

/// Hessian at scale sigma. sigma = 0 selects plain central second
/// differences (no normalization factor); otherwise sigma >= 0.5 and each
/// entry is the Gaussian second derivative times the normalization factor.
inline HessianField hessian(const Volume& vol, double sigma,
                            ScaleNormalization norm = ScaleNormalization::linear) {
  check_scale(sigma, "hessian sigma");
  if (vol.empty()) throw ParameterError("hessian of an empty volume");
  if (sigma == 0.0) return detail::finite_difference_hessian(vol);
  const Kernel1D k0 = gaussian_kernel(sigma, 0), k1 = gaussian_kernel(sigma, 1), k2 = gaussian_kernel(sigma, 2);
  const float factor = norm == ScaleNormalization::linear      ? float(sigma)
                       : norm == ScaleNormalization::quadratic ? float(sigma * sigma)
                                                               : 1.0f;
  HessianField hf;
  hf.sigma = sigma;
  hf.dims = vol.dims();
  hf.entries[0] = separable_convolve(vol, k2, k0, k0);
  hf.entries[1] = separable_convolve(vol, k1, k1, k0);
  hf.entries[2] = separable_convolve(vol, k1, k0, k1);
  hf.entries[3] = separable_convolve(vol, k0, k2, k0);
  hf.entries[4] = separable_convolve(vol, k0, k1, k1);
  hf.entries[5] = separable_convolve(vol, k0, k0, k2);
  if (factor != 1.0f)
    for (auto& e : hf.entries)
      for (auto& s : e.samples()) s *= factor;
  return hf;
}

// ---------------------------------------------------------------------------
// Closed-form 3x3 symmetric eigen-solver

using Mat3 = std::array<std::array<double, 3>, 3>;
using Vec3 = std::array<double, 3>;

struct Eigen3 {
  Vec3 values{};                  ///< sorted by |value|, ties by signed value
  std::array<Vec3, 3> vectors{};  ///< unit eigenvectors matching `values`
};

namespace detail {

inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

// Unit vector orthogonal to v (v need not be normalized, must be nonzero).
inline Vec3 any_orthogonal(const Vec3& v) {
  const Vec3 axis = std::abs(v[0]) <= std::abs(v[1]) && std::abs(v[0]) <= std::abs(v[2]) ? Vec3{1, 0, 0}
                    : std::abs(v[1]) <= std::abs(v[2])                                  ? Vec3{0, 1, 0}
                                                                                         : Vec3{0, 0, 1};
  Vec3 c = cross(v, axis);
  const double n = std::sqrt(dot(c, c));
  return {c[0] / n, c[1] / n, c[2] / n};
}

// Eigenvector of a for eigenvalue lambda from the null space of (a - lambda I).
// `avoid`, when given, is a previously found eigenvector the result should be
// orthogonal to (used for repeated eigenvalues).
inline Vec3 null_vector(const Mat3& a, double lambda, double scale, const Vec3* avoid) {
  const Vec3 r0{a[0][0] - lambda, a[0][1], a[0][2]};
  const Vec3 r1{a[1][0], a[1][1] - lambda, a[1][2]};
  const Vec3 r2{a[2][0], a[2][1], a[2][2] - lambda};
  const Vec3 c[3] = {cross(r0, r1), cross(r0, r2), cross(r1, r2)};
  int best = 0;
  double best_n = dot(c[0], c[0]);
  for (int i = 1; i < 3; ++i) {
    const double n = dot(c[i], c[i]);
    if (n > best_n) best = i, best_n = n;
  }
  const double tiny = 1e-24 * scale * scale * scale * scale;
  if (best_n > tiny) {
    const double n = std::sqrt(best_n);
    return {c[best][0] / n, c[best][1] / n, c[best][2] / n};
  }
  // Rank <= 1: the eigenspace is at least a plane orthogonal to the largest row.
  const Vec3* rows[3] = {&r0, &r1, &r2};
  int big = 0;
  double big_n = dot(r0, r0);
  for (int i = 1; i < 3; ++i)
    if (dot(*rows[i], *rows[i]) > big_n) big = i, big_n = dot(*rows[i], *rows[i]);
  if (big_n <= 1e-24 * scale * scale) {
    // a == lambda I: any basis works.
    if (avoid) return any_orthogonal(*avoid);
    return {1, 0, 0};
  }
  if (avoid) {
    Vec3 v = cross(*rows[big], *avoid);
    const double n = std::sqrt(dot(v, v));
    if (n > 1e-12 * std::sqrt(big_n)) return {v[0] / n, v[1] / n, v[2] / n};
  }
  return any_orthogonal(*rows[big]);
}

inline bool abs_less(double a, double b) {
  const double fa = std::abs(a), fb = std::abs(b);
  return fa < fb || (fa == fb && a < b);
}

}  // namespace detail

/// Eigenvalues of a symmetric matrix via the trigonometric solution of the
/// depressed characteristic cubic, sorted by absolute value.
inline Vec3 symmetric_eigenvalues(const Mat3& a) {
  const double p1 = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
  Vec3 ev;
  if (p1 == 0.0) {
    ev = {a[0][0], a[1][1], a[2][2]};
  } else {
    const double q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
    const double d0 = a[0][0] - q, d1 = a[1][1] - q, d2 = a[2][2] - q;
    const double p2 = d0 * d0 + d1 * d1 + d2 * d2 + 2.0 * p1;
    const double p = std::sqrt(p2 / 6.0);
    // B = (A - qI) / p ; r = det(B) / 2
    const double b00 = d0 / p, b11 = d1 / p, b22 = d2 / p;
    const double b01 = a[0][1] / p, b02 = a[0][2] / p, b12 = a[1][2] / p;
    const double det = b00 * (b11 * b22 - b12 * b12) - b01 * (b01 * b22 - b12 * b02) + b02 * (b01 * b12 - b11 * b02);
    const double r = std::clamp(det / 2.0, -1.0, 1.0);
    const double phi = std::acos(r) / 3.0;
    const double hi = q + 2.0 * p * std::cos(phi);
    const double lo = q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
    ev = {hi, 3.0 * q - hi - lo, lo};
  }
  std::sort(ev.begin(), ev.end(), detail::abs_less);
  return ev;
}

/// Eigenvalues plus unit eigenvectors.
inline Eigen3 symmetric_eigen(const Mat3& a) {
  Eigen3 out;
  out.values = symmetric_eigenvalues(a);
  double scale = 0.0;
  for (const auto& row : a)
    for (double v : row) scale = std::max(scale, std::abs(v));
  if (scale == 0.0) {
    out.vectors = {Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}};
    return out;
  }
  // Largest |lambda| first: it is the best separated for sheet-like input.
  out.vectors[2] = detail::null_vector(a, out.values[2], scale, nullptr);
  out.vectors[1] = detail::null_vector(a, out.values[1], scale, &out.vectors[2]);
  out.vectors[0] = detail::cross(out.vectors[2], out.vectors[1]);
  const double n = std::sqrt(detail::dot(out.vectors[0], out.vectors[0]));
  if (n > 0.5) {
    for (auto& c : out.vectors[0]) c /= n;
  } else {
    out.vectors[0] = detail::null_vector(a, out.values[0], scale, &out.vectors[1]);
  }
  return out;
}

/// Voxelwise sorted eigenvalues and, on request, the unit eigenvector of l3.
struct EigenField {
  Dims dims;
  std::array<Volume, 3> lambda;      ///< |lambda[0]| <= |lambda[1]| <= |lambda[2]|
  std::optional<std::array<Volume, 3>> principal;  ///< x,y,z components of the l3 eigenvector
};

inline Mat3 matrix_at(const HessianField& h, std::size_t i) {
  Mat3 m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m[r][c] = h.h(r, c)[i];
  return m;
}

inline EigenField eigenvalues3(const HessianField& h, bool with_principal = false) {
  EigenField ef;
  ef.dims = h.dims;
  for (auto& l : ef.lambda) l = Volume(h.dims);
  if (with_principal) ef.principal = std::array<Volume, 3>{Volume(h.dims), Volume(h.dims), Volume(h.dims)};
  const std::size_t n = h.dims.size();
  const std::size_t plane = h.dims.nx * h.dims.ny;
  parallel_for(0, h.dims.nz, [&](std::size_t z) {
    for (std::size_t i = z * plane; i < std::min(n, (z + 1) * plane); ++i) {
      const Mat3 m = matrix_at(h, i);
      if (with_principal) {
        const Eigen3 e = symmetric_eigen(m);
        for (int k = 0; k < 3; ++k) ef.lambda[k][i] = float(e.values[k]);
        for (int k = 0; k < 3; ++k) (*ef.principal)[k][i] = float(e.vectors[2][k]);
      } else {
        const Vec3 v = symmetric_eigenvalues(m);
        for (int k = 0; k < 3; ++k) ef.lambda[k][i] = float(v[k]);
      }
    }
  });
  return ef;
}

}  // namespace crackseg

#endif  // CRACKSEG_HESSIAN_HPP
