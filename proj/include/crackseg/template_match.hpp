///   @file template_match.hpp
///   @brief Normalized cross-correlation with rotated plate templates.
///
/// The template is a (2N+1) x (2N+1) x (2b+c) box of layers b (background,
/// 0), c (crack, 1), b (background, 0) along its normal. For a direction d
/// the covered offsets are the integer vectors o whose frame coordinates
/// (o.u, o.v, o.d) round into the box; the layer index is
/// round(o.d + (2b+c-1)/2). Scores are computed on the inverted image, so a
/// dark crack correlates positively with the bright crack layer. Sums are
/// evaluated by FFT over the mirror-padded volume, which gives the same
/// values as direct summation up to rounding.

#ifndef CRACKSEG_TEMPLATE_MATCH_HPP
#define CRACKSEG_TEMPLATE_MATCH_HPP

#include <algorithm>
#include <cmath>
#include <vector>

#include "directions.hpp"
#include "errors.hpp"
#include "fft.hpp"
#include "volume.hpp"

namespace crackseg {

struct TemplateParams {
  int N = 3;  ///< in-plane half-width
  int b = 3;  ///< background layer thickness
  int c = 3;  ///< crack layer thickness
  int n = 15;
  double t4 = 0.65;

  void validate() const {
    if (N < 1 || b < 1 || c < 1) throw ParameterError("template N, b and c must be >= 1");
    if (n < 4) throw ParameterError("template direction discretization n must be >= 4");
    if (!(t4 >= 0.0 && t4 <= 1.0)) throw ParameterError("template threshold t4 must be in [0,1]");
  }
  int thickness() const { return 2 * b + c; }
  /// Bounding radius of the rotated box.
  int radius() const {
    const double h = 0.5 * thickness();
    return int(std::ceil(std::sqrt(2.0 * (N + 0.5) * (N + 0.5) + h * h)));
  }
};

struct RotatedTemplate {
  std::vector<Offset3> offsets;
  std::vector<unsigned char> crack;  ///< 1 for crack-layer offsets
  std::size_t crack_count() const { return std::size_t(std::count(crack.begin(), crack.end(), 1)); }
};

inline RotatedTemplate rotated_template(const Vec3& d, const TemplateParams& p) {
  const auto [u, v, w] = frame_for(d);
  const int r = p.radius(), L = p.thickness();
  RotatedTemplate t;
  for (int z = -r; z <= r; ++z)
    for (int y = -r; y <= r; ++y)
      for (int x = -r; x <= r; ++x) {
        const Vec3 o{double(x), double(y), double(z)};
        if (std::abs(std::lround(detail::dot(o, u))) > p.N || std::abs(std::lround(detail::dot(o, v))) > p.N) continue;
        const long k = std::lround(detail::dot(o, w) + 0.5 * (L - 1));
        if (k < 0 || k >= L) continue;
        t.offsets.push_back({x, y, z});
        t.crack.push_back(k >= p.b && k < p.b + p.c);
      }
  return t;
}

/// max over directions of the correlation coefficient C_theta, per voxel.
/// Windows with (relative) zero variance score 0.
inline Volume template_scores(const Volume& vol, const TemplateParams& p) {
  p.validate();
  if (vol.empty()) throw ParameterError("template matching of an empty volume");
  const Volume inv = invert(vol);
  MirrorCorrelator corr(vol.dims(), p.radius());
  const auto f1 = corr.signal(inv, [](double v) { return v; });
  const auto f2 = corr.signal(inv, [](double v) { return v * v; });
  Volume best(vol.dims(), -1.0f);
  std::vector<double> sc, sa, q;
  for (const Vec3& d : sphere_directions(p.n).dirs) {
    const RotatedTemplate t = rotated_template(d, p);
    const double m = double(t.offsets.size()), mc = double(t.crack_count());
    if (mc == 0.0 || mc == m) continue;
    std::vector<double> wc(t.offsets.size()), wa(t.offsets.size(), 1.0);
    for (std::size_t k = 0; k < wc.size(); ++k) wc[k] = t.crack[k];
    corr.correlate(f1, corr.kernel(t.offsets, wc), sc);
    const auto ka = corr.kernel(t.offsets, wa);
    corr.correlate(f1, ka, sa);
    corr.correlate(f2, ka, q);
    const double tbar = mc / m, tnorm = std::sqrt(mc * (1.0 - tbar));
    for (std::size_t i = 0; i < best.size(); ++i) {
      const double var = q[i] - sa[i] * sa[i] / m;
      double cc = 0.0;
      if (var > 1e-9 * std::max(1.0, q[i])) cc = std::clamp((sc[i] - tbar * sa[i]) / (tnorm * std::sqrt(var)), -1.0, 1.0);
      best[i] = std::max(best[i], float(cc));
    }
  }
  return best;
}

inline BinaryMask template_match(const Volume& vol, const TemplateParams& p) {
  const Volume s = template_scores(vol, p);
  BinaryMask m(vol.dims());
  for (std::size_t i = 0; i < s.size(); ++i)
    if (double(s[i]) >= p.t4) m.set(i);
  return m;
}

}  // namespace crackseg

#endif  // CRACKSEG_TEMPLATE_MATCH_HPP
