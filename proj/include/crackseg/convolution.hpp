///   @file convolution.hpp
///   @brief Sampled Gaussian (derivative) kernels and separable 3D convolution
///          with mirror-reflected borders.

#ifndef CRACKSEG_CONVOLUTION_HPP
#define CRACKSEG_CONVOLUTION_HPP

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "errors.hpp"
#include "parallel.hpp"
#include "volume.hpp"

namespace crackseg {

/// 1D kernel with taps[k + radius] holding the weight at offset k.
struct Kernel1D {
  int radius = 0;
  std::vector<float> taps{1.0f};

  float operator()(int k) const { return taps[static_cast<std::size_t>(k + radius)]; }
};

/// Half-sample symmetric reflection: ... c b a | a b c ... | c b a ...
inline std::size_t mirror_index(long i, std::size_t n) {
  const long period = 2 * static_cast<long>(n);
  long m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<long>(n) ? m : period - 1 - m);
}

inline int gaussian_radius(double sigma) { return static_cast<int>(std::ceil(4.0 * sigma)); }

/// Sampled Gaussian derivative of the given order (0, 1 or 2), truncated at
/// ceil(4 sigma). Taps are renormalized so that the discrete moments match
/// the continuous ones: order 0 has unit mass, order 1 maps x to 1, order 2
/// maps x^2 to 2 and annihilates constants.
inline Kernel1D gaussian_kernel(double sigma, int order) {
  if (!std::isfinite(sigma) || sigma <= 0.0) throw ParameterError("kernel sigma must be positive and finite");
  if (order < 0 || order > 2) throw ParameterError("kernel derivative order must be 0, 1 or 2");
  const int r = gaussian_radius(sigma);
  std::vector<double> g(2 * r + 1), w(2 * r + 1);
  double mass = 0.0;
  for (int k = -r; k <= r; ++k) {
    g[k + r] = std::exp(-0.5 * k * k / (sigma * sigma));
    mass += g[k + r];
  }
  for (auto& v : g) v /= mass;
  const double s2 = sigma * sigma;
  for (int k = -r; k <= r; ++k) {
    const double gk = g[k + r];
    if (order == 0) w[k + r] = gk;
    if (order == 1) w[k + r] = -k / s2 * gk;
    if (order == 2) w[k + r] = (double(k) * k / (s2 * s2) - 1.0 / s2) * gk;
  }
  if (order == 1) {
    double m1 = 0.0;
    for (int k = -r; k <= r; ++k) m1 -= k * w[k + r];
    for (auto& v : w) v /= m1;
  } else if (order == 2) {
    double m0 = 0.0;
    for (auto v : w) m0 += v;
    for (int k = -r; k <= r; ++k) w[k + r] -= m0 * g[k + r];
    double m2 = 0.0;
    for (int k = -r; k <= r; ++k) m2 += double(k) * k * w[k + r];
    for (auto& v : w) v *= 2.0 / m2;
  }
  Kernel1D out;
  out.radius = r;
  out.taps.assign(w.begin(), w.end());
  return out;
}

inline Kernel1D identity_kernel() { return Kernel1D{}; }

namespace detail {

inline bool is_identity(const Kernel1D& k) { return k.radius == 0 && k.taps.size() == 1 && k.taps[0] == 1.0f; }

inline void convolve_x(const Volume& in, Volume& out, const Kernel1D& k) {
  const Dims d = in.dims();
  const int r = k.radius;
  parallel_for(0, d.ny * d.nz, [&](std::size_t row) {
    std::vector<float> padded(d.nx + 2 * r);
    const float* src = in.data().data() + row * d.nx;
    float* dst = out.data().data() + row * d.nx;
    for (long i = -r; i < static_cast<long>(d.nx) + r; ++i) padded[i + r] = src[mirror_index(i, d.nx)];
    for (std::size_t x = 0; x < d.nx; ++x) {
      float acc = 0.0f;
      // out[x] = sum_j k(j) in[x - j]
      for (int j = -r; j <= r; ++j) acc += k(j) * padded[x - j + r];
      dst[x] = acc;
    }
  });
}

inline void convolve_y(const Volume& in, Volume& out, const Kernel1D& k) {
  const Dims d = in.dims();
  const int r = k.radius;
  parallel_for(0, d.nz, [&](std::size_t z) {
    const float* plane = in.data().data() + z * d.nx * d.ny;
    float* oplane = out.data().data() + z * d.nx * d.ny;
    for (std::size_t y = 0; y < d.ny; ++y) {
      float* dst = oplane + y * d.nx;
      std::fill(dst, dst + d.nx, 0.0f);
      for (int j = -r; j <= r; ++j) {
        const float w = k(j);
        const float* src = plane + mirror_index(static_cast<long>(y) - j, d.ny) * d.nx;
        for (std::size_t x = 0; x < d.nx; ++x) dst[x] += w * src[x];
      }
    }
  });
}

inline void convolve_z(const Volume& in, Volume& out, const Kernel1D& k) {
  const Dims d = in.dims();
  const std::size_t plane = d.nx * d.ny;
  const int r = k.radius;
  parallel_for(0, d.nz, [&](std::size_t z) {
    float* dst = out.data().data() + z * plane;
    std::fill(dst, dst + plane, 0.0f);
    for (int j = -r; j <= r; ++j) {
      const float w = k(j);
      const float* src = in.data().data() + mirror_index(static_cast<long>(z) - j, d.nz) * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] += w * src[i];
    }
  });
}

}  // namespace detail

/// Applies kx along x, ky along y and kz along z.
inline Volume separable_convolve(const Volume& vol, const Kernel1D& kx, const Kernel1D& ky, const Kernel1D& kz) {
  Volume a = vol;
  Volume b(vol.dims());
  if (!detail::is_identity(kx)) {
    detail::convolve_x(a, b, kx);
    std::swap(a, b);
  }
  if (!detail::is_identity(ky)) {
    detail::convolve_y(a, b, ky);
    std::swap(a, b);
  }
  if (!detail::is_identity(kz)) {
    detail::convolve_z(a, b, kz);
    std::swap(a, b);
  }
  a.set_value_range(std::nullopt);
  return a;
}

inline void check_scale(double sigma, const char* what) {
  if (!std::isfinite(sigma)) throw ParameterError(std::string(what) + " must be finite");
  if (sigma != 0.0 && sigma < 0.5)
    throw ParameterError(std::string(what) + " must be 0 or at least 0.5, got " + std::to_string(sigma));
}

/// Isotropic Gaussian smoothing; sigma = 0 returns an exact copy.
inline Volume gaussian_blur(const Volume& vol, double sigma) {
  check_scale(sigma, "gaussian_blur sigma");
  if (vol.empty()) throw ParameterError("gaussian_blur on an empty volume");
  if (sigma == 0.0) return vol;
  const Kernel1D k = gaussian_kernel(sigma, 0);
  return separable_convolve(vol, k, k, k);
}

/// Gaussian derivative of orders (ox,oy,oz) at scale sigma > 0.
inline Volume gaussian_derivative(const Volume& vol, double sigma, int ox, int oy, int oz) {
  if (!std::isfinite(sigma) || sigma <= 0.0) throw ParameterError("gaussian_derivative needs sigma > 0");
  return separable_convolve(vol, gaussian_kernel(sigma, ox), gaussian_kernel(sigma, oy), gaussian_kernel(sigma, oz));
}

}  // namespace crackseg

#endif  // CRACKSEG_CONVOLUTION_HPP
