#include <chrono>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include <crackseg/features.hpp>
#include <crackseg/hessian.hpp>

#include "oracles.hpp"
#include "test_support.hpp"

using namespace crackseg;
using testing_support::plate_volume;
using testing_support::random_volume;

namespace {

Mat3 random_symmetric(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  Mat3 m;
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j) m[i][j] = m[j][i] = u(rng);
  return m;
}

}  // namespace

TEST(Hessian, ConstantVolumeIsZero) {
  Volume v({12, 12, 12}, 5.0f);
  for (double sigma : {0.0, 0.5, 1.5}) {
    HessianField h = hessian(v, sigma);
    for (const auto& e : h.entries)
      for (float s : e.samples()) EXPECT_NEAR(s, 0.0f, 1e-4f);
  }
}

TEST(Hessian, QuadraticInXHasLinearScaleFactor) {
  const Dims d{40, 9, 9};
  Volume v(d);
  for (std::size_t z = 0; z < d.nz; ++z)
    for (std::size_t y = 0; y < d.ny; ++y)
      for (std::size_t x = 0; x < d.nx; ++x) v.at(x, y, z) = float((x - 20.0) * (x - 20.0));
  for (double sigma : {1.0, 2.0}) {
    HessianField h = hessian(v, sigma);
    EXPECT_NEAR(h.h(0, 0).at(20, 4, 4), 2.0 * sigma, 1e-2);
    EXPECT_NEAR(h.h(1, 1).at(20, 4, 4), 0.0, 1e-3);
    EXPECT_NEAR(h.h(0, 1).at(20, 4, 4), 0.0, 1e-3);
  }
  HessianField q = hessian(v, 2.0, ScaleNormalization::quadratic);
  EXPECT_NEAR(q.h(0, 0).at(20, 4, 4), 8.0, 4e-2);
}

TEST(Hessian, SymmetricAccess) {
  Volume v = random_volume({8, 8, 8}, 1);
  HessianField h = hessian(v, 1.0);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_EQ(&h.h(i, j), &h.h(j, i));
}

TEST(Hessian, RejectsSubHalfSigma) {
  Volume v({4, 4, 4}, 0.0f);
  EXPECT_THROW(hessian(v, 0.25), ParameterError);
  EXPECT_THROW(hessian(v, -1.0), ParameterError);
}

TEST(Hessian, FiniteDifferencesAtZeroSigma) {
  Volume v = random_volume({6, 6, 6}, 2);
  HessianField h = hessian(v, 0.0);
  const float expect = v.at(3, 2, 2) - 2 * v.at(2, 2, 2) + v.at(1, 2, 2);
  EXPECT_FLOAT_EQ(h.h(0, 0).at(2, 2, 2), expect);
}

TEST(Eigen, DiagonalMatrix) {
  Mat3 m{{{1, 0, 0}, {0, -2, 0}, {0, 0, 3}}};
  Vec3 ev = symmetric_eigenvalues(m);
  EXPECT_EQ(ev[0], 1.0);
  EXPECT_EQ(ev[1], -2.0);
  EXPECT_EQ(ev[2], 3.0);
}

TEST(Eigen, MatchesJacobiOnRandomMatrices) {
  std::mt19937_64 rng(2024);
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::vector<Mat3> ms;
  for (int k = 0; k < 1000; ++k) ms.push_back(random_symmetric(rng));
  std::vector<Vec3> got;
  for (const auto& m : ms) got.push_back(symmetric_eigenvalues(m));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (std::size_t k = 0; k < ms.size(); ++k) {
    const auto ref = oracles::jacobi_eigenvalues(ms[k]);
    for (int i = 0; i < 3; ++i) worst = std::max(worst, std::abs(got[k][i] - ref[i]));
  }
  EXPECT_LT(worst, 1e-6);
  EXPECT_LT(secs, 1.0);
}

TEST(Eigen, VectorsHaveSmallResidual) {
  std::mt19937_64 rng(7);
  for (int k = 0; k < 500; ++k) {
    Mat3 m = random_symmetric(rng);
    if (k % 5 == 0) m[0][1] = m[1][0] = m[0][2] = m[2][0] = 0.0;  // repeated structure
    if (k % 7 == 0) m = Mat3{{{2, 0, 0}, {0, 2, 0}, {0, 0, -1}}};
    const Eigen3 e = symmetric_eigen(m);
    double norm = 0.0;
    for (auto& r : m)
      for (double v : r) norm += v * v;
    norm = std::sqrt(norm);
    for (int i = 0; i < 3; ++i) {
      double res = 0.0, len = 0.0;
      for (int r = 0; r < 3; ++r) {
        double av = 0.0;
        for (int c = 0; c < 3; ++c) av += m[r][c] * e.vectors[i][c];
        res += (av - e.values[i] * e.vectors[i][r]) * (av - e.values[i] * e.vectors[i][r]);
        len += e.vectors[i][r] * e.vectors[i][r];
      }
      EXPECT_LE(std::sqrt(res), 1e-5 * norm) << "matrix " << k << " vector " << i;
      EXPECT_NEAR(len, 1.0, 1e-9);
    }
  }
}

TEST(Eigen, DarkPlateGivesLargePositiveL3) {
  const Dims d{24, 24, 24};
  Volume v = plate_volume(d, 12, 1, 200.0f, 40.0f);
  EigenField ef = eigenvalues3(hessian(v, 1.5), true);
  const float l1 = ef.lambda[0].at(12, 12, 12), l2 = ef.lambda[1].at(12, 12, 12), l3 = ef.lambda[2].at(12, 12, 12);
  EXPECT_GT(l3, 0.0f);
  EXPECT_GT(l3, 100.0f * std::abs(l1));
  EXPECT_GT(l3, 100.0f * std::abs(l2));
  EXPECT_NEAR(std::abs((*ef.principal)[2].at(12, 12, 12)), 1.0f, 1e-4f);
}

TEST(Eigen, RotationByNinetyDegreesPermutesField) {
  const Dims d{10, 10, 10};
  Volume v = random_volume(d, 33, 0.0f, 100.0f);
  Volume r(d);  // r(x,y,z) = v(y, 9-x, z)
  for (std::size_t z = 0; z < 10; ++z)
    for (std::size_t y = 0; y < 10; ++y)
      for (std::size_t x = 0; x < 10; ++x) r.at(x, y, z) = v.at(y, 9 - x, z);
  EigenField a = eigenvalues3(hessian(v, 1.0)), b = eigenvalues3(hessian(r, 1.0));
  for (std::size_t z = 0; z < 10; ++z)
    for (std::size_t y = 0; y < 10; ++y)
      for (std::size_t x = 0; x < 10; ++x)
        for (int k = 0; k < 3; ++k) EXPECT_NEAR(b.lambda[k].at(x, y, z), a.lambda[k].at(y, 9 - x, z), 1e-3);
}

TEST(FeatureBank, TableBankHasSixtyNamedFeatures) {
  const auto bank = default_bank();
  EXPECT_EQ(bank.feature_count(), 60u);
  Volume v = random_volume({12, 12, 12}, 4);
  FeatureStack fs = feature_bank(v, bank);
  ASSERT_EQ(fs.size(), 60u);
  ASSERT_EQ(fs.names.size(), 60u);
  EXPECT_EQ(fs.names.front(), "gaussian(0.5)");
  EXPECT_EQ(fs.names.back(), "structure_l3(1)");
  for (const auto& f : fs.volumes) EXPECT_EQ(f.dims(), v.dims());
}

TEST(FeatureBank, ConstantInput) {
  Volume v({10, 10, 10}, 7.0f);
  const auto bank = default_bank();
  FeatureStack fs = feature_bank(v, bank);
  for (std::size_t f = 0; f < fs.size(); ++f) {
    const float expect = f < bank.gaussian.size() ? 7.0f : 0.0f;
    for (float s : fs.volumes[f].samples()) ASSERT_NEAR(s, expect, 1e-4f) << fs.names[f];
  }
}

TEST(FeatureBank, DifferenceIsExactBlurDifference) {
  Volume v = random_volume({14, 12, 10}, 9, 0.0f, 255.0f);
  FeatureBankConfig c;
  c.difference = {{1.5, 1.0}};
  FeatureStack fs = feature_bank(v, c);
  Volume a = gaussian_blur(v, 1.5), b = gaussian_blur(v, 1.0);
  for (std::size_t i = 0; i < v.size(); ++i) ASSERT_EQ(fs.volumes[0][i], a[i] - b[i]);
}

TEST(FeatureBank, GradientMagnitudeIsNonNegative) {
  Volume v = random_volume({12, 12, 12}, 10, -5.0f, 5.0f);
  for (float s : gradient_magnitude(v, 1.0).samples()) EXPECT_GE(s, 0.0f);
}

TEST(FeatureBank, StructureTensorIsPositiveSemidefinite) {
  Volume v = random_volume({12, 12, 12}, 12, 0.0f, 10.0f);
  auto ev = structure_tensor_eigenvalues(v, 1.0);
  for (const auto& l : ev)
    for (float s : l.samples()) EXPECT_GE(s, -1e-3f);
}

TEST(FeatureBank, JsonRoundTrip) {
  auto bank = default_bank();
  bank.hessian_normalization = ScaleNormalization::quadratic;
  EXPECT_EQ(feature_bank_from_json(to_json(bank)), bank);
  nlohmann::json bad = to_json(bank);
  bad["gaussian"] = {0.2};
  EXPECT_THROW(feature_bank_from_json(bad), ParameterError);
}
