// Small generated crack images shared by the method tests.

#ifndef CRACKSEG_TEST_FIXTURES_HPP
#define CRACKSEG_TEST_FIXTURES_HPP

#include <crackseg/dataset.hpp>

namespace testing_support {

inline crackseg::GeneratedImage crack_image(int n, int width, std::uint64_t seed,
                                            crackseg::Arrangement arr = crackseg::Arrangement::single,
                                            const char* phantom = "high_contrast") {
  using namespace crackseg;
  RecipeEntry e;
  e.id = "fixture";
  e.crack.n = n;
  e.crack.width = width;
  e.crack.arrangement = arr;
  e.crack.seed = derive_seed(seed, {1});
  const std::size_t side = std::size_t{1} << n;
  e.phantom = phantom_preset(phantom, {side, side, side}, derive_seed(seed, {2}));
  e.composite.crack_gray_mean = e.phantom->pore.gray.mean;
  e.composite.crack_gray_std = e.phantom->pore.gray.std;
  e.composite.seed = derive_seed(seed, {3});
  return generate_image(e);
}

}  // namespace testing_support

#endif  // CRACKSEG_TEST_FIXTURES_HPP
