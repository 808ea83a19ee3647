///   @file morphology.hpp
///   @brief Binary dilation with a cubic structuring element.

#ifndef CRACKSEG_MORPHOLOGY_HPP
#define CRACKSEG_MORPHOLOGY_HPP

#include <cstddef>
#include <string>
#include <vector>

#include "errors.hpp"
#include "volume.hpp"

namespace crackseg {

namespace detail {

// One axis of the separable cube dilation: out(p) = OR_{|k|<=r} in(p + k e_axis).
inline BinaryMask dilate_axis(const BinaryMask& in, int axis, long r) {
  const Dims d = in.dims();
  const std::size_t n[3] = {d.nx, d.ny, d.nz};
  const std::size_t stride[3] = {1, d.nx, d.nx * d.ny};
  const long len = static_cast<long>(n[axis]);
  BinaryMask out(d);
  // Iterate all lines along `axis`.
  const int a1 = axis == 0 ? 1 : 0;
  const int a2 = axis == 2 ? 1 : 2;
  for (std::size_t j = 0; j < n[a2]; ++j) {
    for (std::size_t i = 0; i < n[a1]; ++i) {
      const std::size_t base = i * stride[a1] + j * stride[a2];
      // Distance-to-nearest-set scan in both directions.
      long prev = -(1L << 40);
      std::vector<long> left(len), right(len);
      for (long t = 0; t < len; ++t) {
        if (in.get(base + t * stride[axis])) prev = t;
        left[t] = t - prev;
      }
      long next = 1L << 40;
      for (long t = len - 1; t >= 0; --t) {
        if (in.get(base + t * stride[axis])) next = t;
        right[t] = next - t;
      }
      for (long t = 0; t < len; ++t)
        if (left[t] <= r || right[t] <= r) out.set(base + t * stride[axis]);
    }
  }
  return out;
}

}  // namespace detail

/// Dilation by a cube of side `width` (odd). width = 1 is the identity.
inline BinaryMask dilate(const BinaryMask& mask, int width) {
  if (width < 1 || width % 2 == 0)
    throw ParameterError("dilation width must be an odd positive integer, got " + std::to_string(width));
  if (width == 1) return mask;
  const long r = width / 2;
  BinaryMask out = detail::dilate_axis(mask, 0, r);
  out = detail::dilate_axis(out, 1, r);
  return detail::dilate_axis(out, 2, r);
}

}  // namespace crackseg

#endif  // CRACKSEG_MORPHOLOGY_HPP
