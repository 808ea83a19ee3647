///   @file fbs.hpp
///   @brief Fractional Brownian surfaces by circulant embedding.
///
/// The isotropic covariance c0 - r^{2H} + c2 r^2 (r <= 1), extended smoothly
/// to zero on [1, 2], is embedded in a block-circulant matrix whose
/// eigenvalues come from one FFT. A second FFT of scaled complex noise
/// yields a field on [0,2]^2 of which the [0,1]^2 block is kept; adding the
/// random linear term sqrt(2 c2) (x N1 + y N2) cancels the r^2 part, so
/// increments satisfy E|z(p) - z(q)|^2 = 2 |p - q|^{2H} exactly.

#ifndef CRACKSEG_FBS_HPP
#define CRACKSEG_FBS_HPP

#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <fftw3.h>

#include "errors.hpp"
#include "fft.hpp"
#include "random.hpp"

namespace crackseg {

/// Height field z(p,q) on a 2^n x 2^n grid with unit extent, stored p-fastest.
struct FbsField {
  int n = 0;
  double hurst = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> heights;

  std::size_t side() const { return std::size_t{1} << n; }
  double operator()(std::size_t p, std::size_t q) const { return heights[p + side() * q]; }
};

namespace detail {

struct EmbeddedCovariance {
  double alpha, beta, c0, c2;
  static constexpr double R = 2.0;

  explicit EmbeddedCovariance(double hurst) : alpha(2.0 * hurst) {
    if (alpha <= 1.5) {
      beta = 0.0;
      c2 = alpha / 2.0;
      c0 = 1.0 - alpha / 2.0;
    } else {
      beta = alpha * (2.0 - alpha) / (3.0 * R * (R * R - 1.0));
      c2 = (alpha - beta * (R - 1.0) * (R - 1.0) * (R + 2.0)) / 2.0;
      c0 = beta * (R - 1.0) * (R - 1.0) * (R - 1.0) + 1.0 - c2;
    }
  }
  double operator()(double r) const {
    if (r <= 1.0) return c0 - std::pow(r, alpha) + c2 * r * r;
    if (r <= R) return beta * (R - r) * (R - r) * (R - r) / r;
    return 0.0;
  }
};

// In-place 2D complex DFT (forward sign) of a k x k array.
inline void fft2_inplace(std::vector<std::complex<double>>& a, int k) {
  auto* p = reinterpret_cast<fftw_complex*>(a.data());
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_2d(k, k, p, p, FFTW_FORWARD, FFTW_ESTIMATE);
  }
  if (!plan) throw GenerationError("FFTW planning failed");
  fftw_execute(plan);
  std::lock_guard lock(fftw_planner_mutex());
  fftw_destroy_plan(plan);
}

// sqrt(eigenvalue / k^2) of the embedded covariance, cached per (n, H).
inline std::shared_ptr<const std::vector<double>> embedding_spectrum(int n, double hurst) {
  static std::mutex mutex;
  static std::map<std::pair<int, double>, std::shared_ptr<const std::vector<double>>> cache;
  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find({n, hurst}); it != cache.end()) return it->second;
  }
  const int side = 1 << n;
  const int m = 2 * side + 1;  // grid points per axis covering [0, R]
  const int k = 2 * (m - 1);   // circulant size, a power of two
  const double h = 1.0 / side;
  const EmbeddedCovariance rho(hurst);
  std::vector<double> row(std::size_t(m) * m);
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < m; ++i) row[std::size_t(j) * m + i] = rho(h * std::sqrt(double(i) * i + double(j) * j));
  std::vector<std::complex<double>> a(std::size_t(k) * k);
  auto fold = [&](int c) { return c < m ? c : k - c; };
  for (int j = 0; j < k; ++j)
    for (int i = 0; i < k; ++i) a[std::size_t(j) * k + i] = row[std::size_t(fold(j)) * m + fold(i)];
  fft2_inplace(a, k);
  auto lam = std::make_shared<std::vector<double>>(a.size());
  const double norm = 1.0 / (double(k) * k);
  for (std::size_t i = 0; i < a.size(); ++i) (*lam)[i] = std::sqrt(std::max(0.0, a[i].real() * norm));
  std::lock_guard lock(mutex);
  if (cache.size() > 16) cache.clear();
  return cache.emplace(std::make_pair(n, hurst), std::move(lam)).first->second;
}

}  // namespace detail

inline FbsField simulate_fbs(int n, double hurst, std::uint64_t seed) {
  if (n < 3 || n > 12) throw ParameterError("fBS exponent n must be in [3,12], got " + std::to_string(n));
  if (!(hurst > 0.0 && hurst <= 1.0)) throw ParameterError("Hurst index must be in (0,1], got " + std::to_string(hurst));
  const int side = 1 << n;
  const int k = 4 * side;
  const double h = 1.0 / side;
  const detail::EmbeddedCovariance rho(hurst);
  const auto lam = detail::embedding_spectrum(n, hurst);

  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::complex<double>> a(lam->size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double re = gauss(rng), im = gauss(rng);
    a[i] = {(*lam)[i] * re, (*lam)[i] * im};
  }
  detail::fft2_inplace(a, k);

  FbsField f;
  f.n = n;
  f.hurst = hurst;
  f.seed = seed;
  f.heights.resize(std::size_t(side) * side);
  const double origin = a[0].real();
  const double g1 = gauss(rng), g2 = gauss(rng);
  const double lin = std::sqrt(2.0 * rho.c2);
  for (int q = 0; q < side; ++q)
    for (int p = 0; p < side; ++p)
      f.heights[std::size_t(q) * side + p] =
          a[std::size_t(q) * k + p].real() - origin + lin * (h * p * g1 + h * q * g2);
  return f;
}

}  // namespace crackseg

#endif  // CRACKSEG_FBS_HPP
