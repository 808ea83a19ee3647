#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include <crackseg/adaptive_morph.hpp>
#include <crackseg/directions.hpp>
#include <crackseg/metrics.hpp>
#include <crackseg/template_match.hpp>

#include "fixtures.hpp"
#include "test_support.hpp"

using namespace crackseg;
using testing_support::random_volume;

namespace {

double axial_angle(const Vec3& a, const Vec3& b) {
  return std::acos(std::min(1.0, std::abs(detail::dot(a, b))));
}

float mirrored(const Volume& v, long x, long y, long z) {
  const Dims& d = v.dims();
  return v.at(mirror_index(x, d.nx), mirror_index(y, d.ny), mirror_index(z, d.nz));
}

// Direct correlation coefficient of one rotated template at one voxel.
double direct_ncc(const Volume& inv, const RotatedTemplate& t, long x, long y, long z) {
  const double m = double(t.offsets.size());
  double si = 0, st = 0;
  for (std::size_t k = 0; k < t.offsets.size(); ++k) {
    si += mirrored(inv, x + t.offsets[k][0], y + t.offsets[k][1], z + t.offsets[k][2]);
    st += t.crack[k];
  }
  const double mi = si / m, mt = st / m;
  double num = 0, vi = 0, vt = 0;
  for (std::size_t k = 0; k < t.offsets.size(); ++k) {
    const double a = mirrored(inv, x + t.offsets[k][0], y + t.offsets[k][1], z + t.offsets[k][2]) - mi;
    const double b = t.crack[k] - mt;
    num += a * b;
    vi += a * a;
    vt += b * b;
  }
  return vi * vt > 0 ? num / std::sqrt(vi * vt) : 0.0;
}

}  // namespace

TEST(Directions, CountNormsAndAxes) {
  for (int n = 11; n <= 40; ++n) {
    const auto s = sphere_directions(n);
    const double target = n * (n / 4.0 + 1.0);
    EXPECT_NEAR(double(s.dirs.size()), target, 0.1 * target) << n;
    for (const auto& d : s.dirs) {
      EXPECT_NEAR(std::sqrt(detail::dot(d, d)), 1.0, 1e-9);
      EXPECT_GE(d[2], -1e-12);
    }
    for (const Vec3& axis : {Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}}) {
      double best = 1e9;
      for (const auto& d : s.dirs) best = std::min(best, axial_angle(d, axis));
      EXPECT_LT(best, 1e-9);
    }
  }
}

TEST(Directions, DistinctAndEvenlySpread) {
  const auto s = sphere_directions(15);
  double lo = 1e9, hi = 0;
  for (std::size_t i = 0; i < s.dirs.size(); ++i) {
    double nearest = 1e9;
    for (std::size_t j = 0; j < s.dirs.size(); ++j)
      if (i != j) nearest = std::min(nearest, axial_angle(s.dirs[i], s.dirs[j]));
    EXPECT_GT(nearest, 1e-6);
    lo = std::min(lo, nearest);
    hi = std::max(hi, nearest);
  }
  EXPECT_LE(hi / lo, 3.0);
}

TEST(Directions, RejectsSmallN) { EXPECT_THROW(sphere_directions(3), ParameterError); }

TEST(MirrorCorrelator, MatchesDirectSum) {
  const Volume v = random_volume({9, 7, 8}, 11);
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> o(-3, 3);
  std::vector<Offset3> offs;
  std::vector<double> w;
  for (int k = 0; k < 12; ++k) offs.push_back({o(rng), o(rng), o(rng)}), w.push_back(0.5 + k);
  MirrorCorrelator c(v.dims(), 3);
  std::vector<double> out;
  c.correlate(c.signal(v, [](double s) { return s * s; }), c.kernel(offs, w), out);
  for (long z = 0; z < 8; ++z)
    for (long y = 0; y < 7; ++y)
      for (long x = 0; x < 9; ++x) {
        double ref = 0;
        for (std::size_t k = 0; k < offs.size(); ++k) {
          const double s = mirrored(v, x + offs[k][0], y + offs[k][1], z + offs[k][2]);
          ref += w[k] * s * s;
        }
        EXPECT_NEAR(out[v.dims().index(x, y, z)], ref, 1e-9);
      }
  EXPECT_THROW(c.kernel({{4, 0, 0}}, {1.0}), ParameterError);
}

TEST(TemplateMatch, TemplateShape) {
  TemplateParams p{2, 2, 1, 15, 0.6};
  const auto t = rotated_template({0, 0, 1}, p);
  EXPECT_EQ(t.offsets.size(), 5u * 5u * 5u);
  EXPECT_EQ(t.crack_count(), 25u);
  for (std::size_t k = 0; k < t.offsets.size(); ++k) EXPECT_EQ(bool(t.crack[k]), t.offsets[k][2] == 0);
}

TEST(TemplateMatch, ScoresMatchDirectCorrelation) {
  const Volume v = random_volume({12, 11, 10}, 4, 0.0f, 255.0f);
  TemplateParams p{1, 1, 1, 4, 0.5};
  const Volume s = template_scores(v, p);
  const Volume inv = invert(v);
  std::vector<RotatedTemplate> ts;
  for (const auto& d : sphere_directions(p.n).dirs) ts.push_back(rotated_template(d, p));
  for (long z = 0; z < 10; ++z)
    for (long y = 0; y < 11; ++y)
      for (long x = 0; x < 12; ++x) {
        double best = -1;
        for (const auto& t : ts) best = std::max(best, direct_ncc(inv, t, x, y, z));
        ASSERT_NEAR(s.at(x, y, z), best, 1e-5);
      }
}

TEST(TemplateMatch, PerfectPlateGivesUnitScore) {
  TemplateParams p{3, 3, 3, 15, 0.65};
  const auto dirs = sphere_directions(p.n).dirs;
  for (std::size_t which : {std::size_t(0), std::size_t(5), std::size_t(23), dirs.size() - 1}) {
    const Vec3 d = dirs[which];
    const auto f = frame_for(d);
    Volume v({32, 32, 32});
    const int L = p.thickness();
    for (long z = 0; z < 32; ++z)
      for (long y = 0; y < 32; ++y)
        for (long x = 0; x < 32; ++x) {
          const Vec3 o{double(x - 16), double(y - 16), double(z - 16)};
          const long k = std::lround(detail::dot(o, f[2]) + 0.5 * (L - 1));
          v.at(x, y, z) = (k >= p.b && k < p.b + p.c) ? 40.0f : 200.0f;
        }
    EXPECT_NEAR(template_scores(v, p).at(16, 16, 16), 1.0, 1e-6) << which;
  }
}

TEST(TemplateMatch, ConstantVolumeIsEmpty) {
  const Volume v({16, 16, 16}, 90.0f);
  for (float s : template_scores(v, TemplateParams{2, 2, 1, 8, 0.5}).samples()) EXPECT_EQ(s, 0.0f);
  EXPECT_EQ(template_match(v, TemplateParams{2, 2, 1, 8, 0.01}).count(), 0u);
}

TEST(TemplateMatch, AffineInvariant) {
  const Volume v = random_volume({14, 14, 14}, 8, 0.0f, 255.0f);
  Volume w = v;
  for (auto& s : w.samples()) s = 0.5f * s + 17.0f;
  TemplateParams p{2, 1, 1, 8, 0.5};
  const Volume a = template_scores(v, p), b = template_scores(w, p);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-5);
}

TEST(TemplateMatch, FindsWidthThreeCrack) {
  const auto img = testing_support::crack_image(6, 3, 42, Arrangement::parallel);
  const Metrics m = evaluate(template_match(img.gray, TemplateParams{3, 3, 3, 15, 0.65}), img.truth, 1);
  EXPECT_GE(m.precision, 0.8);
  EXPECT_GT(m.recall, 0.3);
}

TEST(TemplateMatch, ParameterErrors) {
  const Volume v({8, 8, 8});
  EXPECT_THROW(template_scores(v, TemplateParams{0, 1, 1, 8, 0.5}), ParameterError);
  EXPECT_THROW(template_scores(v, TemplateParams{1, 1, 1, 3, 0.5}), ParameterError);
  EXPECT_THROW(template_scores(v, TemplateParams{1, 1, 1, 8, 1.5}), ParameterError);
}

TEST(AdaptiveMorph, ConstantVolumeIsEmpty) {
  const Volume v({16, 16, 16}, 50.0f);
  const Volume d = adaptive_difference(v, AdaptiveMorphParams{1.0, 3, 20, 0.5, 2.0});
  for (float s : d.samples()) EXPECT_EQ(s, 0.0f);
  EXPECT_EQ(adaptive_threshold(d, -5.0).count(), 0u);
}

TEST(AdaptiveMorph, NoiseFreePlateIsDetected) {
  Volume v = testing_support::plate_volume({40, 40, 40}, 20, 0, 200.0f, 50.0f);
  const BinaryMask plate = testing_support::plate_mask(v.dims(), 20, 0);
  const BinaryMask m = adaptive_morph(v, AdaptiveMorphParams{1.0, 3, 20, 0.5, 2.0});
  EXPECT_EQ((m & plate).count(), plate.count());
  EXPECT_EQ(m.count(), plate.count());
}

TEST(AdaptiveMorph, ThresholdShrinksWithK) {
  const auto img = testing_support::crack_image(5, 3, 9);
  const Volume d = adaptive_difference(img.gray, AdaptiveMorphParams{1.0, 3, 20, 0.5, 2.0});
  const BinaryMask m2 = adaptive_threshold(d, 2.0), m4 = adaptive_threshold(d, 4.0);
  EXPECT_EQ((m4 & m2).count(), m4.count());
  EXPECT_LE(m4.count(), m2.count());
}

TEST(AdaptiveMorph, FindsWidthThreeCrack) {
  const auto img = testing_support::crack_image(6, 3, 43);
  const Metrics m = evaluate(adaptive_morph(img.gray, AdaptiveMorphParams{1.0, 3, 20, 0.5, 4.5}), img.truth, 1);
  EXPECT_GE(m.precision, 0.7);
  EXPECT_GT(m.recall, 0.3);
}

TEST(AdaptiveMorph, ParameterErrors) {
  const Volume v({8, 8, 8});
  EXPECT_THROW(adaptive_difference(v, AdaptiveMorphParams{1.0, 0, 20, 0.5, 2}), ParameterError);
  EXPECT_THROW(adaptive_difference(v, AdaptiveMorphParams{1.0, 3, 20, 1.6, 2}), ParameterError);
  EXPECT_THROW(adaptive_difference(v, AdaptiveMorphParams{0.3, 3, 20, 0.5, 2}), ParameterError);
}
