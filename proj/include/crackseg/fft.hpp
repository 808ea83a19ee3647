///   @file fft.hpp
///   @brief FFTW helpers: planner lock and mirror-padded 3D correlation.

#ifndef CRACKSEG_FFT_HPP
#define CRACKSEG_FFT_HPP

#include <array>
#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <vector>

#include <fftw3.h>

#include "convolution.hpp"
#include "errors.hpp"
#include "volume.hpp"

namespace crackseg {

namespace detail {

// FFTW's planner is not re-entrant.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

}  // namespace detail

/// Computes out(p) = sum_o k(o) f(p + o) for every voxel p of a volume, with
/// f mirror-extended beyond the border. Offsets must satisfy |o_i| <= radius.
class MirrorCorrelator {
 public:
  using Spectrum = std::vector<std::complex<double>>;

  MirrorCorrelator(Dims dims, int radius) : dims_(dims), r_(radius) {
    if (radius < 0) throw ParameterError("correlation radius must be non-negative");
    n_ = {dims.nx + 2 * std::size_t(radius), dims.ny + 2 * std::size_t(radius), dims.nz + 2 * std::size_t(radius)};
    real_size_ = n_[0] * n_[1] * n_[2];
    spec_size_ = (n_[0] / 2 + 1) * n_[1] * n_[2];
    real_.reset(static_cast<double*>(fftw_malloc(sizeof(double) * real_size_)));
    spec_.reset(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * spec_size_)));
    if (!real_ || !spec_) throw std::bad_alloc();
    std::lock_guard lock(detail::fftw_planner_mutex());
    // FFTW takes dimensions slowest first.
    const int nz = int(n_[2]), ny = int(n_[1]), nx = int(n_[0]);
    forward_ = fftw_plan_dft_r2c_3d(nz, ny, nx, real_.get(), spec_.get(), FFTW_ESTIMATE);
    backward_ = fftw_plan_dft_c2r_3d(nz, ny, nx, spec_.get(), real_.get(), FFTW_ESTIMATE);
  }
  ~MirrorCorrelator() {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
  }
  MirrorCorrelator(const MirrorCorrelator&) = delete;
  MirrorCorrelator& operator=(const MirrorCorrelator&) = delete;

  int radius() const { return r_; }

  /// Spectrum of the mirror-padded samples map(vol[i]).
  template <class Map>
  Spectrum signal(const Volume& vol, Map map) {
    require_same_dims(vol.dims(), dims_, "correlation signal");
    for (std::size_t z = 0; z < n_[2]; ++z) {
      const std::size_t sz = mirror_index(long(z) - r_, dims_.nz);
      for (std::size_t y = 0; y < n_[1]; ++y) {
        const std::size_t sy = mirror_index(long(y) - r_, dims_.ny);
        double* row = real_.get() + n_[0] * (y + n_[1] * z);
        for (std::size_t x = 0; x < n_[0]; ++x)
          row[x] = map(double(vol.at(mirror_index(long(x) - r_, dims_.nx), sy, sz)));
      }
    }
    return transform();
  }

  /// Spectrum of the kernel placing weight w at -o, so that the product
  /// with a signal spectrum correlates.
  Spectrum kernel(const std::vector<Offset3>& offsets, const std::vector<double>& weights) {
    std::fill(real_.get(), real_.get() + real_size_, 0.0);
    for (std::size_t k = 0; k < offsets.size(); ++k) {
      std::size_t idx[3];
      for (int a = 0; a < 3; ++a) {
        if (std::abs(offsets[k][a]) > r_) throw ParameterError("correlation offset exceeds radius");
        idx[a] = std::size_t((long(n_[a]) - offsets[k][a]) % long(n_[a]));
      }
      real_.get()[idx[0] + n_[0] * (idx[1] + n_[1] * idx[2])] += weights[k];
    }
    return transform();
  }

  /// out[i] for the original voxels, i in x-fastest order.
  void correlate(const Spectrum& signal, const Spectrum& kernel, std::vector<double>& out) {
    auto* s = spec_.get();
    for (std::size_t i = 0; i < spec_size_; ++i) {
      const std::complex<double> v = signal[i] * kernel[i];
      s[i][0] = v.real();
      s[i][1] = v.imag();
    }
    fftw_execute(backward_);
    const double scale = 1.0 / double(real_size_);
    out.resize(dims_.size());
    for (std::size_t z = 0; z < dims_.nz; ++z)
      for (std::size_t y = 0; y < dims_.ny; ++y) {
        const double* row = real_.get() + r_ + n_[0] * (y + r_ + n_[1] * (z + r_));
        double* dst = out.data() + dims_.nx * (y + dims_.ny * z);
        for (std::size_t x = 0; x < dims_.nx; ++x) dst[x] = row[x] * scale;
      }
  }

 private:
  Spectrum transform() {
    fftw_execute(forward_);
    Spectrum out(spec_size_);
    const auto* s = spec_.get();
    for (std::size_t i = 0; i < spec_size_; ++i) out[i] = {s[i][0], s[i][1]};
    return out;
  }

  Dims dims_;
  int r_;
  std::array<std::size_t, 3> n_{};
  std::size_t real_size_ = 0, spec_size_ = 0;
  std::unique_ptr<double, detail::FftwFree> real_;
  std::unique_ptr<fftw_complex, detail::FftwFree> spec_;
  fftw_plan forward_{}, backward_{};
};

}  // namespace crackseg

#endif  // CRACKSEG_FFT_HPP
