///   @file metrics.hpp
///   @brief Tolerance-aware confusion counts and precision/recall/F1.
///
/// Distances are Euclidean between voxel centers. A truth voxel counts as
/// tp when some predicted voxel lies within `tol`; a predicted voxel counts
/// as fp when no truth voxel lies within `tol`.

#ifndef CRACKSEG_METRICS_HPP
#define CRACKSEG_METRICS_HPP

#include <cstdint>
#include <limits>
#include <vector>

#include "errors.hpp"
#include "parallel.hpp"
#include "volume.hpp"

namespace crackseg {

namespace detail {

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher) along one line.
// f holds squared distances (inf allowed); the result overwrites f.
inline void edt_line(double* f, std::size_t n, std::size_t stride, std::vector<double>& buf, std::vector<long>& v,
                     std::vector<double>& z) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  buf.resize(n);
  v.resize(n);
  z.resize(n + 1);
  for (std::size_t i = 0; i < n; ++i) buf[i] = f[i * stride];
  long first = 0;
  while (first < long(n) && buf[first] == inf) ++first;
  if (first == long(n)) {
    for (std::size_t i = 0; i < n; ++i) f[i * stride] = inf;
    return;
  }
  long k = 0;
  v[0] = first;
  z[0] = -inf;
  z[1] = inf;
  auto meet = [&](long q, long p) {
    return ((buf[q] + double(q) * q) - (buf[p] + double(p) * p)) / (2.0 * double(q - p));
  };
  for (long q = first + 1; q < long(n); ++q) {
    if (buf[q] == inf) continue;
    double s = meet(q, v[k]);
    while (s <= z[k]) s = meet(q, v[--k]);
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  long j = 0;
  for (long q = 0; q < long(n); ++q) {
    while (z[j + 1] < double(q)) ++j;
    const double d = double(q - v[j]);
    f[q * stride] = d * d + buf[v[j]];
  }
}

}  // namespace detail

/// Exact squared Euclidean distance from every voxel to the nearest set
/// voxel of `mask`; +inf everywhere when the mask is empty.
inline std::vector<double> squared_distance_transform(const BinaryMask& mask) {
  const Dims d = mask.dims();
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> f(d.size(), inf);
  mask.for_each_set([&](std::size_t i) { f[i] = 0.0; });
  const std::size_t n[3] = {d.nx, d.ny, d.nz};
  const std::size_t stride[3] = {1, d.nx, d.nx * d.ny};
  for (int axis = 0; axis < 3; ++axis) {
    const int a1 = axis == 0 ? 1 : 0;
    const int a2 = axis == 2 ? 1 : 2;
    parallel_for(0, n[a2], [&](std::size_t j) {
      std::vector<double> buf, z;
      std::vector<long> v;
      for (std::size_t i = 0; i < n[a1]; ++i)
        detail::edt_line(f.data() + i * stride[a1] + j * stride[a2], n[axis], stride[axis], buf, v, z);
    });
  }
  return f;
}

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  int tol = 0;
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

inline ConfusionCounts confusion_with_tolerance(const BinaryMask& pred, const BinaryMask& truth, int tol) {
  require_same_dims(pred.dims(), truth.dims(), "confusion");
  if (tol < 0) throw ParameterError("tolerance must be non-negative");
  ConfusionCounts c;
  c.tol = tol;
  const std::uint64_t n_truth = truth.count();
  if (tol == 0) {
    c.tp = (pred & truth).count();
    c.fp = pred.count() - c.tp;
  } else {
    const double r2 = double(tol) * tol;
    const auto to_pred = squared_distance_transform(pred);
    const auto to_truth = squared_distance_transform(truth);
    truth.for_each_set([&](std::size_t i) { c.tp += to_pred[i] <= r2; });
    pred.for_each_set([&](std::size_t i) { c.fp += to_truth[i] > r2; });
  }
  c.fn = n_truth - c.tp;
  c.tn = truth.size() - c.tp - c.fn - c.fp;
  return c;
}

struct Metrics {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

/// Zero-division conventions: P = 0 when nothing is predicted, except that
/// P = 1 when there is also nothing to find (fn = 0); R symmetric (R = 1
/// when there is nothing to find and nothing falsely predicted); F1 = 0 when
/// P + R = 0.
inline Metrics prf1(const ConfusionCounts& c) {
  Metrics m;
  if (c.tp + c.fp == 0)
    m.precision = c.fn == 0 ? 1.0 : 0.0;
  else
    m.precision = double(c.tp) / double(c.tp + c.fp);
  if (c.tp + c.fn == 0)
    m.recall = c.fp == 0 ? 1.0 : 0.0;
  else
    m.recall = double(c.tp) / double(c.tp + c.fn);
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

inline Metrics evaluate(const BinaryMask& pred, const BinaryMask& truth, int tol) {
  return prf1(confusion_with_tolerance(pred, truth, tol));
}

}  // namespace crackseg

#endif  // CRACKSEG_METRICS_HPP
