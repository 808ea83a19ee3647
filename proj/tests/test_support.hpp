// Shared fixtures for the unit tests.

#ifndef CRACKSEG_TEST_SUPPORT_HPP
#define CRACKSEG_TEST_SUPPORT_HPP

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include <crackseg/volume.hpp>

namespace testing_support {

inline crackseg::Volume random_volume(crackseg::Dims d, std::uint64_t seed, float lo = 0.0f, float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  crackseg::Volume v(d);
  for (auto& s : v.samples()) s = u(rng);
  return v;
}

inline crackseg::BinaryMask random_mask(crackseg::Dims d, std::uint64_t seed, double p) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution b(p);
  crackseg::BinaryMask m(d);
  for (std::size_t i = 0; i < m.size(); ++i)
    if (b(rng)) m.set(i);
  return m;
}

/// Volume with value `bg` everywhere and `fg` on the slab |z - center| <= half.
inline crackseg::Volume plate_volume(crackseg::Dims d, std::size_t center, std::size_t half, float bg, float fg) {
  crackseg::Volume v(d, bg);
  for (std::size_t z = 0; z < d.nz; ++z)
    if (z + half >= center && z <= center + half)
      for (std::size_t y = 0; y < d.ny; ++y)
        for (std::size_t x = 0; x < d.nx; ++x) v.at(x, y, z) = fg;
  return v;
}

inline crackseg::BinaryMask plate_mask(crackseg::Dims d, std::size_t center, std::size_t half) {
  crackseg::BinaryMask m(d);
  for (std::size_t z = 0; z < d.nz; ++z)
    if (z + half >= center && z <= center + half)
      for (std::size_t y = 0; y < d.ny; ++y)
        for (std::size_t x = 0; x < d.nx; ++x) m.set(x, y, z);
  return m;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  auto p = std::filesystem::temp_directory_path() /
           ("crackseg_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing_support

#endif
