///   @file synthesis.hpp
///   @brief Crack rasterization, concrete phantom, and compositing.

#ifndef CRACKSEG_SYNTHESIS_HPP
#define CRACKSEG_SYNTHESIS_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "convolution.hpp"
#include "errors.hpp"
#include "fbs.hpp"
#include "morphology.hpp"
#include "random.hpp"
#include "volume.hpp"

namespace crackseg {

enum class Axis { x = 0, y = 1, z = 2 };
enum class Arrangement { single, parallel, orthogonal };

inline const char* axis_name(Axis a) { return a == Axis::x ? "x" : a == Axis::y ? "y" : "z"; }
inline Axis parse_axis(const std::string& s) {
  if (s == "x") return Axis::x;
  if (s == "y") return Axis::y;
  if (s == "z") return Axis::z;
  throw ConfigError("unknown axis '" + s + "'");
}
inline const char* arrangement_name(Arrangement a) {
  return a == Arrangement::single ? "single" : a == Arrangement::parallel ? "parallel" : "orthogonal";
}
inline Arrangement parse_arrangement(const std::string& s) {
  if (s == "single") return Arrangement::single;
  if (s == "parallel") return Arrangement::parallel;
  if (s == "orthogonal") return Arrangement::orthogonal;
  throw ConfigError("unknown arrangement '" + s + "'");
}

/// Placement of one discretized surface inside the cube.
struct RasterOptions {
  long center = -1;         ///< slice index the zero height maps to; -1 selects side/2
  double amplitude = -1.0;  ///< heights are scaled into [-amplitude, amplitude]; -1 selects side/2 - 1
};

/// Sets voxel (p, q, z(p,q)) for the scaled, rounded heights, then dilates
/// to `width`. `normal` is the axis the height runs along: for z the voxel
/// is (x,y,z) = (p,q,h), for x it is (h,p,q), for y it is (p,h,q).
inline BinaryMask rasterize_crack(const FbsField& field, int width, Axis normal, RasterOptions opt = {}) {
  if (width < 1 || width % 2 == 0) throw ParameterError("crack width must be odd and positive");
  const std::size_t side = field.side();
  if (field.heights.size() != side * side) throw ShapeError("fBS field is not square");
  const long center = opt.center < 0 ? long(side / 2) : opt.center;
  const double amp = opt.amplitude < 0 ? double(side / 2) - 1.0 : opt.amplitude;
  double lo = field.heights[0], hi = field.heights[0];
  for (double h : field.heights) lo = std::min(lo, h), hi = std::max(hi, h);
  const double mid = 0.5 * (lo + hi), halfrange = 0.5 * (hi - lo);
  const double scale = halfrange > 0.0 ? amp / halfrange : 0.0;
  BinaryMask mask({side, side, side});
  for (std::size_t q = 0; q < side; ++q)
    for (std::size_t p = 0; p < side; ++p) {
      const long h = center + long(std::round((field(p, q) - mid) * scale));
      if (h < 0 || h >= long(side)) throw ParameterError("crack surface leaves the volume; reduce amplitude");
      switch (normal) {
        case Axis::z: mask.set(p, q, std::size_t(h)); break;
        case Axis::x: mask.set(std::size_t(h), p, q); break;
        case Axis::y: mask.set(p, std::size_t(h), q); break;
      }
    }
  return dilate(mask, width);
}

struct CrackSpec {
  int n = 8;
  double hurst = 0.99;
  int width = 1;
  Axis plane = Axis::z;  ///< normal axis of the (first) surface
  Arrangement arrangement = Arrangement::single;
  /// Fraction of the admissible height range the surface spans.
  double relief = 0.2;
  std::uint64_t seed = 0;

  int count() const { return arrangement == Arrangement::single ? 1 : 2; }
  void validate() const {
    if (width < 1 || width % 2 == 0) throw ParameterError("crack width must be odd and positive");
    if (!(relief >= 0.0 && relief <= 1.0)) throw ParameterError("crack relief must be in [0,1]");
    if (n < 3 || n > 12) throw ParameterError("crack grid exponent must be in [3,12]");
    if (!(hurst > 0.0 && hurst <= 1.0)) throw ParameterError("Hurst index must be in (0,1]");
  }
};

/// Ground-truth mask for a crack spec. Parallel surfaces sit at a quarter and
/// three quarters of the depth, each confined to its half; orthogonal ones
/// share the center and are united.
inline BinaryMask crack_mask(const CrackSpec& spec) {
  spec.validate();
  const long side = 1L << spec.n;
  auto surface = [&](int k) { return simulate_fbs(spec.n, spec.hurst, derive_seed(spec.seed, {std::uint64_t(k)})); };
  switch (spec.arrangement) {
    case Arrangement::single:
      return rasterize_crack(surface(0), spec.width, spec.plane, {side / 2, spec.relief * (side / 2 - 1)});
    case Arrangement::parallel: {
      const double amp = spec.relief * std::max(0L, side / 4 - 1 - spec.width / 2);
      BinaryMask m = rasterize_crack(surface(0), spec.width, spec.plane, {side / 4, amp});
      m |= rasterize_crack(surface(1), spec.width, spec.plane, {3 * side / 4, amp});
      return m;
    }
    case Arrangement::orthogonal: {
      const Axis second = Axis((int(spec.plane) + 1) % 3);
      BinaryMask m = rasterize_crack(surface(0), spec.width, spec.plane, {side / 2, spec.relief * (side / 2 - 1)});
      m |= rasterize_crack(surface(1), spec.width, second, {side / 2, spec.relief * (side / 2 - 1)});
      return m;
    }
  }
  return BinaryMask();
}

// ---------------------------------------------------------------------------
// Background phantom

struct GrayStats {
  double mean = 0.0;
  double std = 0.0;
};

struct InclusionSpec {
  double fraction = 0.0;
  double radius_min = 1.0;
  double radius_max = 1.0;
  GrayStats gray;
};

struct PhantomSpec {
  Dims dims;
  GrayStats matrix{150.0, 15.0};
  InclusionSpec aggregate;
  InclusionSpec pore;
  double blur_sigma = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (dims.size() == 0) throw ParameterError("phantom dims must be positive");
    for (const InclusionSpec* s : {&aggregate, &pore}) {
      if (!(s->fraction >= 0.0 && s->fraction <= 1.0)) throw ParameterError("phantom fraction outside [0,1]");
      if (s->fraction > 0.0 && !(s->radius_min > 0.0 && s->radius_max >= s->radius_min))
        throw ParameterError("phantom radii must be positive with min <= max");
      if (s->gray.std < 0.0) throw ParameterError("phantom gray std must be non-negative");
    }
    if (aggregate.fraction + pore.fraction >= 1.0) throw ParameterError("phantom fractions must sum below 1");
    if (matrix.std < 0.0) throw ParameterError("phantom gray std must be non-negative");
    check_scale(blur_sigma, "phantom blur sigma");
  }
};

/// Named phantom calibrations; radii scale with the cube side relative to 256.
inline PhantomSpec phantom_preset(const std::string& name, Dims dims, std::uint64_t seed) {
  PhantomSpec s;
  s.dims = dims;
  s.seed = seed;
  const double k = double(dims.nx) / 256.0;
  auto r = [&](double v) { return std::max(1.0, v * k); };
  if (name == "realistic") {
    s.matrix = {150.0, 18.0};
    s.aggregate = {0.25, r(8), r(24), {172.0, 14.0}};
    s.pore = {0.02, r(2), r(8), {60.0, 14.0}};
    s.blur_sigma = 1.0;
  } else if (name == "high_contrast") {
    s.matrix = {200.0, 6.0};
    s.aggregate = {0.20, r(8), r(24), {210.0, 6.0}};
    s.pore = {0.01, r(2), r(6), {40.0, 6.0}};
    s.blur_sigma = 0.5;
  } else {
    throw ConfigError("unknown phantom preset '" + name + "' (expected realistic or high_contrast)");
  }
  return s;
}

enum class Phase : std::uint8_t { matrix = 0, aggregate = 1, pore = 2 };

struct Phantom {
  Volume gray;
  std::vector<Phase> phase;  ///< per voxel, before blurring
};

namespace detail {

// Random sequential placement of non-overlapping balls until the labeled
// fraction reaches the target.
inline void place_balls(std::vector<Phase>& phase, Dims d, const InclusionSpec& s, Phase label, Rng& rng) {
  if (s.fraction <= 0.0) return;
  const std::size_t target = std::size_t(std::ceil(s.fraction * double(d.size())));
  std::uniform_real_distribution<double> ux(0.0, double(d.nx)), uy(0.0, double(d.ny)), uz(0.0, double(d.nz));
  std::uniform_real_distribution<double> ur(s.radius_min, s.radius_max);
  std::size_t placed = 0;
  int rejections = 0;
  std::vector<std::size_t> ball;
  while (placed < target) {
    const double cx = ux(rng), cy = uy(rng), cz = uz(rng), rad = ur(rng);
    ball.clear();
    bool free = true;
    const long x0 = std::max(0L, long(std::floor(cx - rad))), x1 = std::min(long(d.nx) - 1, long(std::ceil(cx + rad)));
    const long y0 = std::max(0L, long(std::floor(cy - rad))), y1 = std::min(long(d.ny) - 1, long(std::ceil(cy + rad)));
    const long z0 = std::max(0L, long(std::floor(cz - rad))), z1 = std::min(long(d.nz) - 1, long(std::ceil(cz + rad)));
    for (long z = z0; z <= z1 && free; ++z)
      for (long y = y0; y <= y1 && free; ++y)
        for (long x = x0; x <= x1; ++x) {
          const double dx = x + 0.5 - cx, dy = y + 0.5 - cy, dz = z + 0.5 - cz;
          if (dx * dx + dy * dy + dz * dz > rad * rad) continue;
          const std::size_t i = d.index(x, y, z);
          if (phase[i] != Phase::matrix) {
            free = false;
            break;
          }
          ball.push_back(i);
        }
    if (!free || ball.empty()) {
      if (++rejections >= 10000)
        throw GenerationError("phantom: 10000 consecutive ball rejections; fraction/radius combination infeasible");
      continue;
    }
    rejections = 0;
    for (std::size_t i : ball) phase[i] = label;
    placed += ball.size();
  }
}

}  // namespace detail

/// Boolean-model concrete phantom: hard-core aggregate balls, then pore
/// balls, over a textured matrix. Gray values are i.i.d. normal per phase and
/// the result is blurred with `blur_sigma`.
inline Phantom synthesize_phantom(const PhantomSpec& spec) {
  spec.validate();
  Phantom ph;
  ph.phase.assign(spec.dims.size(), Phase::matrix);
  Rng geometry(derive_seed(spec.seed, {1}));
  detail::place_balls(ph.phase, spec.dims, spec.aggregate, Phase::aggregate, geometry);
  detail::place_balls(ph.phase, spec.dims, spec.pore, Phase::pore, geometry);
  Rng noise(derive_seed(spec.seed, {2}));
  std::normal_distribution<double> g(0.0, 1.0);
  Volume raw(spec.dims);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const GrayStats& s = ph.phase[i] == Phase::matrix      ? spec.matrix
                         : ph.phase[i] == Phase::aggregate ? spec.aggregate.gray
                                                           : spec.pore.gray;
    raw[i] = float(s.mean + s.std * g(noise));
  }
  ph.gray = gaussian_blur(raw, spec.blur_sigma);
  return ph;
}

inline Volume synthesize_background(const PhantomSpec& spec) { return synthesize_phantom(spec).gray; }

// ---------------------------------------------------------------------------
// Compositing

struct CompositeParams {
  double crack_gray_mean = 0.0;
  double crack_gray_std = 0.0;
  double transition_sigma = 1.0;
  std::uint64_t seed = 0;
};

/// Replaces crack voxels by i.i.d. normal gray values, then smooths inside
/// the crack support dilated by one 3x3x3 step. Everything else keeps the
/// background bits.
inline Volume composite(const Volume& background, const BinaryMask& crack, const CompositeParams& params) {
  require_same_dims(background.dims(), crack.dims(), "composite");
  if (!(params.crack_gray_std >= 0.0)) throw ParameterError("crack gray std must be non-negative");
  check_scale(params.transition_sigma, "transition sigma");
  Volume out = background;
  if (!crack.any()) return out;
  Rng rng(params.seed);
  std::normal_distribution<double> g(0.0, 1.0);
  crack.for_each_set([&](std::size_t i) { out[i] = float(params.crack_gray_mean + params.crack_gray_std * g(rng)); });
  if (params.transition_sigma > 0.0) {
    const Volume smooth = gaussian_blur(out, params.transition_sigma);
    dilate(crack, 3).for_each_set([&](std::size_t i) { out[i] = smooth[i]; });
  }
  return out;
}

}  // namespace crackseg

#endif  // CRACKSEG_SYNTHESIS_HPP
