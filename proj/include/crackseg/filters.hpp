///   @file filters.hpp
///   @brief Sheet filter, plate-mode Frangi filter and thresholding.

#ifndef CRACKSEG_FILTERS_HPP
#define CRACKSEG_FILTERS_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "errors.hpp"
#include "hessian.hpp"
#include "parallel.hpp"
#include "volume.hpp"

namespace crackseg {

/// mask(p) = vol(p) >= t
inline BinaryMask threshold(const Volume& vol, double t) {
  BinaryMask m(vol.dims());
  for (std::size_t i = 0; i < vol.size(); ++i)
    if (double(vol[i]) >= t) m.set(i);
  return m;
}

// ---------------------------------------------------------------------------
// Sheet filter

struct SheetParams {
  double sigma = 1.5;
  double rho = 1.0;
  double delta = 1.5;
  double t1 = 0.8;

  void validate() const {
    check_scale(sigma, "sheet sigma");
    if (!(rho > 0.0 && rho <= 1.0)) throw ParameterError("sheet rho must be in (0,1]");
    if (!(delta > 0.0 && std::isfinite(delta))) throw ParameterError("sheet delta must be positive");
    if (!std::isfinite(t1)) throw ParameterError("sheet threshold must be finite");
  }
};

/// Discrepancy weight g(l_s, l_t).
inline double sheet_g(double ls, double lt, double rho, double delta) {
  const double at = std::abs(lt);
  if (ls <= 0.0 && at >= std::abs(ls)) return at == 0.0 ? 1.0 : std::pow(1.0 + ls / at, delta);
  if (ls > 0.0 && ls <= at / rho) return std::pow(1.0 - rho * ls / at, delta);
  return 0.0;
}

/// S = l3 g(l1,l3) g(l2,l3) for l3 > 0, else 0.
inline double sheet_value(double l1, double l2, double l3, double rho, double delta) {
  if (!(l3 > 0.0)) return 0.0;
  return l3 * sheet_g(l1, l3, rho, delta) * sheet_g(l2, l3, rho, delta);
}

inline Volume sheet_response(const Volume& vol, double sigma, double rho, double delta,
                             ScaleNormalization norm = ScaleNormalization::linear) {
  SheetParams{sigma, rho, delta, 0.0}.validate();
  const EigenField ef = eigenvalues3(hessian(vol, sigma, norm));
  Volume out(vol.dims());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = float(sheet_value(ef.lambda[0][i], ef.lambda[1][i], ef.lambda[2][i], rho, delta));
  return out;
}

inline BinaryMask sheet_segment(const Volume& vol, const SheetParams& p) {
  p.validate();
  return threshold(sheet_response(vol, p.sigma, p.rho, p.delta), p.t1);
}

// ---------------------------------------------------------------------------
// Frangi filter (plate mode)

struct FrangiParams {
  double sigma_min = 1.5;
  double sigma_max = 1.5;
  double alpha = 0.3;
  double beta = 0.3;
  double t2 = 24.0;  ///< on the 8-bit normalized response

  void validate() const {
    check_scale(sigma_min, "frangi sigma_min");
    check_scale(sigma_max, "frangi sigma_max");
    if (sigma_min < 0.5 || sigma_max < sigma_min) throw ParameterError("frangi needs 0.5 <= sigma_min <= sigma_max");
    if (!(alpha > 0.0 && std::isfinite(alpha))) throw ParameterError("frangi alpha must be positive");
    if (!(beta > 0.0 && std::isfinite(beta))) throw ParameterError("frangi beta must be positive");
    if (!(t2 >= 0.0 && t2 <= 255.0)) throw ParameterError("frangi threshold must be in [0,255]");
  }
};

/// Plate measure E for one voxel; eta is the volume-wide max of R.
inline double frangi_value(double l1, double l2, double l3, double alpha, double beta, double eta) {
  if (!(l3 > 0.0) || eta <= 0.0) return 0.0;
  const double qa = std::abs(l2) / std::abs(l3);
  const double r2 = l1 * l1 + l2 * l2 + l3 * l3;
  double e = std::exp(-qa * qa / alpha) * (1.0 - std::exp(-r2 / eta));
  if (l2 != 0.0) {
    const double qb = std::abs(l1) / std::sqrt(std::abs(l2) * std::abs(l3));
    e *= std::exp(-qb * qb / beta);
  }
  return e;
}

/// Maximum of E over sigma_min, sigma_min + 0.5, ..., sigma_max, clamped
/// below 1 so that F in [0,1) survives floating-point rounding.
inline Volume frangi_raw(const Volume& vol, const FrangiParams& p,
                         ScaleNormalization norm = ScaleNormalization::linear) {
  p.validate();
  Volume best(vol.dims(), 0.0f);
  const float below_one = std::nextafter(1.0f, 0.0f);
  for (int k = 0;; ++k) {
    const double sigma = p.sigma_min + 0.5 * k;
    if (sigma > p.sigma_max + 1e-9) break;
    const EigenField ef = eigenvalues3(hessian(vol, sigma, norm));
    double eta = 0.0;
    for (std::size_t i = 0; i < vol.size(); ++i) {
      const double l1 = ef.lambda[0][i], l2 = ef.lambda[1][i], l3 = ef.lambda[2][i];
      eta = std::max(eta, std::sqrt(l1 * l1 + l2 * l2 + l3 * l3));
    }
    for (std::size_t i = 0; i < vol.size(); ++i) {
      const float e = float(frangi_value(ef.lambda[0][i], ef.lambda[1][i], ef.lambda[2][i], p.alpha, p.beta, eta));
      best[i] = std::max(best[i], std::min(e, below_one));
    }
  }
  return best;
}

/// Min-max map onto the integers 0..255 (stored as float). A constant
/// volume maps to 0.
inline Volume normalize_8bit(const Volume& vol) {
  Volume out(vol.dims(), 0.0f);
  if (vol.empty()) return out;
  const auto [lo, hi] = vol.minmax();
  if (!(hi > lo)) return out;
  const double scale = 255.0 / (double(hi) - double(lo));
  for (std::size_t i = 0; i < vol.size(); ++i) out[i] = float(std::round((double(vol[i]) - lo) * scale));
  return out;
}

inline Volume frangi_response(const Volume& vol, const FrangiParams& p) { return normalize_8bit(frangi_raw(vol, p)); }

inline BinaryMask frangi_segment(const Volume& vol, const FrangiParams& p) {
  return threshold(frangi_response(vol, p), p.t2);
}

}  // namespace crackseg

#endif  // CRACKSEG_FILTERS_HPP
