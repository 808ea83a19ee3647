///   @file volume.hpp
///   @brief Dense 3D scalar volumes and packed binary masks.
///
/// Both containers store voxels in x-fastest order: the linear index of
/// (x,y,z) is x + nx*(y + ny*z).

#ifndef CRACKSEG_VOLUME_HPP
#define CRACKSEG_VOLUME_HPP

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace crackseg {

struct Dims {
  std::size_t nx = 0, ny = 0, nz = 0;

  constexpr std::size_t size() const { return nx * ny * nz; }
  constexpr bool empty() const { return size() == 0; }
  constexpr std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
    return x + nx * (y + ny * z);
  }
  constexpr bool contains(long x, long y, long z) const {
    return x >= 0 && y >= 0 && z >= 0 && static_cast<std::size_t>(x) < nx &&
           static_cast<std::size_t>(y) < ny && static_cast<std::size_t>(z) < nz;
  }
  friend constexpr bool operator==(const Dims&, const Dims&) = default;

  std::string str() const {
    return std::to_string(nx) + "x" + std::to_string(ny) + "x" + std::to_string(nz);
  }
};

/// Integer voxel offset (x, y, z).
using Offset3 = std::array<int, 3>;

struct VoxelCoord {
  std::size_t x = 0, y = 0, z = 0;
  friend constexpr bool operator==(const VoxelCoord&, const VoxelCoord&) = default;
};

inline void require_same_dims(const Dims& a, const Dims& b, const char* what) {
  if (!(a == b)) throw ShapeError(std::string(what) + ": " + a.str() + " vs " + b.str());
}

/// Dense 3D field of 32-bit float samples.
class Volume {
 public:
  Volume() = default;
  explicit Volume(Dims dims, float fill = 0.0f) : dims_(dims), data_(dims.size(), fill) {}
  Volume(Dims dims, std::vector<float> data) : dims_(dims), data_(std::move(data)) {
    if (data_.size() != dims_.size())
      throw ShapeError("sample count " + std::to_string(data_.size()) + " does not match " + dims_.str());
  }

  const Dims& dims() const { return dims_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }
  float& at(std::size_t x, std::size_t y, std::size_t z) { return data_[dims_.index(x, y, z)]; }
  float at(std::size_t x, std::size_t y, std::size_t z) const { return data_[dims_.index(x, y, z)]; }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  std::vector<float>& samples() { return data_; }
  const std::vector<float>& samples() const { return data_; }

  /// Optional (min,max) metadata, e.g. the nominal range of an 8-bit scan.
  const std::optional<std::pair<float, float>>& value_range() const { return value_range_; }
  void set_value_range(std::optional<std::pair<float, float>> r) { value_range_ = r; }

  /// Actual (min,max) of the samples.
  std::pair<float, float> minmax() const {
    if (data_.empty()) return {0.0f, 0.0f};
    auto [lo, hi] = std::minmax_element(data_.begin(), data_.end());
    return {*lo, *hi};
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
  }

  friend bool operator==(const Volume& a, const Volume& b) {
    return a.dims_ == b.dims_ && a.data_ == b.data_;
  }

 private:
  Dims dims_;
  std::vector<float> data_;
  std::optional<std::pair<float, float>> value_range_;
};

/// Dense 3D boolean field packed 64 voxels per word.
class BinaryMask {
 public:
  BinaryMask() = default;
  explicit BinaryMask(Dims dims, bool fill = false)
      : dims_(dims), words_((dims.size() + 63) / 64, fill ? ~std::uint64_t{0} : 0) {
    trim_tail();
  }

  const Dims& dims() const { return dims_; }
  std::size_t size() const { return dims_.size(); }

  bool get(std::size_t i) const { return (words_[i >> 6] >> (i & 63)) & 1u; }
  bool get(std::size_t x, std::size_t y, std::size_t z) const { return get(dims_.index(x, y, z)); }
  void set(std::size_t i, bool v = true) {
    const std::uint64_t bit = std::uint64_t{1} << (i & 63);
    if (v)
      words_[i >> 6] |= bit;
    else
      words_[i >> 6] &= ~bit;
  }
  void set(std::size_t x, std::size_t y, std::size_t z, bool v = true) { set(dims_.index(x, y, z), v); }

  std::size_t count() const {
    std::size_t n = 0;
    for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
    return n;
  }
  bool any() const {
    return std::any_of(words_.begin(), words_.end(), [](std::uint64_t w) { return w != 0; });
  }

  /// Calls fn(index) for every set voxel in ascending index order.
  template <class Fn>
  void for_each_set(Fn&& fn) const {
    for (std::size_t w = 0; w < words_.size(); ++w) {
      std::uint64_t bits = words_[w];
      while (bits) {
        const int b = std::countr_zero(bits);
        fn(w * 64 + static_cast<std::size_t>(b));
        bits &= bits - 1;
      }
    }
  }

  BinaryMask& operator|=(const BinaryMask& o) {
    require_same_dims(dims_, o.dims_, "mask union");
    for (std::size_t i = 0; i < words_.size(); ++i) words_[i] |= o.words_[i];
    return *this;
  }
  BinaryMask& operator&=(const BinaryMask& o) {
    require_same_dims(dims_, o.dims_, "mask intersection");
    for (std::size_t i = 0; i < words_.size(); ++i) words_[i] &= o.words_[i];
    return *this;
  }
  friend BinaryMask operator|(BinaryMask a, const BinaryMask& b) { return a |= b; }
  friend BinaryMask operator&(BinaryMask a, const BinaryMask& b) { return a &= b; }

  /// True when every voxel set here is also set in `o`.
  bool subset_of(const BinaryMask& o) const {
    require_same_dims(dims_, o.dims_, "mask subset");
    for (std::size_t i = 0; i < words_.size(); ++i)
      if (words_[i] & ~o.words_[i]) return false;
    return true;
  }

  std::span<const std::uint64_t> words() const { return words_; }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  void trim_tail() {
    const std::size_t rem = dims_.size() & 63;
    if (rem && !words_.empty()) words_.back() &= (std::uint64_t{1} << rem) - 1;
  }

  Dims dims_;
  std::vector<std::uint64_t> words_;
};

/// out(p) = max - vol(p), with max the largest sample of `vol`.
inline Volume invert(const Volume& vol) {
  const float hi = vol.minmax().second;
  Volume out(vol.dims());
  for (std::size_t i = 0; i < vol.size(); ++i) out[i] = hi - vol[i];
  return out;
}

}  // namespace crackseg

#endif  // CRACKSEG_VOLUME_HPP
