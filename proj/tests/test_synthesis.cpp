#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include <crackseg/dataset.hpp>
#include <crackseg/fbs.hpp>
#include <crackseg/synthesis.hpp>

#include "oracles.hpp"
#include "test_support.hpp"

using namespace crackseg;
namespace fs = std::filesystem;

namespace {

FbsField constant_field(int n, double value) {
  FbsField f;
  f.n = n;
  f.hurst = 0.5;
  f.heights.assign(f.side() * f.side(), value);
  return f;
}

std::vector<unsigned char> dense(const BinaryMask& m) {
  std::vector<unsigned char> v(m.size(), 0);
  m.for_each_set([&](std::size_t i) { v[i] = 1; });
  return v;
}

int components(const BinaryMask& m) {
  const Dims d = m.dims();
  return oracles::components26(dense(m), long(d.nx), long(d.ny), long(d.nz));
}

// Largest height difference between 4-adjacent columns of a width-1 z-normal
// crack, read back from the mask.
long max_column_step(const BinaryMask& m) {
  const Dims d = m.dims();
  std::vector<long> h(d.nx * d.ny, -1);
  for (std::size_t z = 0; z < d.nz; ++z)
    for (std::size_t y = 0; y < d.ny; ++y)
      for (std::size_t x = 0; x < d.nx; ++x)
        if (m.get(x, y, z)) h[x + d.nx * y] = long(z);
  long worst = 0;
  for (std::size_t y = 0; y < d.ny; ++y)
    for (std::size_t x = 0; x < d.nx; ++x) {
      if (x + 1 < d.nx) worst = std::max(worst, std::abs(h[x + 1 + d.nx * y] - h[x + d.nx * y]));
      if (y + 1 < d.ny) worst = std::max(worst, std::abs(h[x + d.nx * (y + 1)] - h[x + d.nx * y]));
    }
  return worst;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Fbs, DeterministicGivenSeed) {
  EXPECT_EQ(simulate_fbs(6, 0.7, 5).heights, simulate_fbs(6, 0.7, 5).heights);
  EXPECT_NE(simulate_fbs(6, 0.7, 5).heights, simulate_fbs(6, 0.7, 6).heights);
}

TEST(Fbs, RejectsBadParameters) {
  EXPECT_THROW(simulate_fbs(6, 0.0, 1), ParameterError);
  EXPECT_THROW(simulate_fbs(6, 1.2, 1), ParameterError);
  EXPECT_THROW(simulate_fbs(6, std::nan(""), 1), ParameterError);
  EXPECT_THROW(simulate_fbs(2, 0.5, 1), ParameterError);
}

TEST(Fbs, StructureFunctionExponent) {
  for (double hurst : {0.4, 0.8}) {
    std::vector<std::vector<double>> fields;
    for (std::uint64_t s = 0; s < 12; ++s) fields.push_back(simulate_fbs(7, hurst, s).heights);
    EXPECT_NEAR(oracles::structure_function_slope(fields, 128, 16), 2 * hurst, 0.15) << "H=" << hurst;
  }
}

TEST(Fbs, SmootherForLargerHurst) {
  auto roughness = [](const FbsField& f) {
    double lo = 1e300, hi = -1e300, step = 0;
    for (double h : f.heights) lo = std::min(lo, h), hi = std::max(hi, h);
    for (std::size_t q = 0; q < f.side(); ++q)
      for (std::size_t p = 0; p + 1 < f.side(); ++p) step += std::abs(f(p + 1, q) - f(p, q));
    return step / (hi - lo);
  };
  EXPECT_LT(roughness(simulate_fbs(7, 0.99, 3)), roughness(simulate_fbs(7, 0.3, 3)));
}

TEST(Rasterize, FlatFieldWidthOneIsMidSlice) {
  BinaryMask m = rasterize_crack(constant_field(4, 0.0), 1, Axis::z);
  EXPECT_EQ(m.count(), 256u);
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t x = 0; x < 16; ++x) EXPECT_TRUE(m.get(x, y, 8));
}

TEST(Rasterize, FlatFieldWidthThreeIsThreeSlices) {
  BinaryMask m = rasterize_crack(constant_field(4, 2.5), 3, Axis::z);
  EXPECT_EQ(m.count(), 3u * 256u);
  for (std::size_t z : {7, 8, 9}) EXPECT_TRUE(m.get(3, 4, z));
}

TEST(Rasterize, WidthOneIsAFunctionGraph) {
  for (std::uint64_t s = 0; s < 4; ++s) {
    FbsField f = simulate_fbs(5, 0.5, s);
    for (Axis a : {Axis::x, Axis::y, Axis::z}) EXPECT_EQ(rasterize_crack(f, 1, a).count(), 32u * 32u);
  }
}

TEST(Rasterize, FullRangeIsUsed) {
  FbsField f = simulate_fbs(5, 0.8, 9);
  BinaryMask m = rasterize_crack(f, 1, Axis::z);
  bool low = false, high = false;
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 32; ++x) low |= m.get(x, y, 1), high |= m.get(x, y, 31);
  EXPECT_TRUE(low);
  EXPECT_TRUE(high);
}

TEST(Rasterize, PlaneSelectsNormalAxis) {
  BinaryMask mx = rasterize_crack(constant_field(3, 0.0), 1, Axis::x);
  BinaryMask my = rasterize_crack(constant_field(3, 0.0), 1, Axis::y);
  EXPECT_TRUE(mx.get(4, 1, 6));
  EXPECT_FALSE(mx.get(3, 1, 6));
  EXPECT_TRUE(my.get(1, 4, 6));
}

TEST(Rasterize, ConnectedWhenStepsDoNotExceedWidth) {
  int checked = 0;
  for (std::uint64_t s = 0; s < 8; ++s)
    for (double relief : {0.25, 0.6, 1.0}) {
      CrackSpec spec;
      spec.n = 6;
      spec.hurst = 0.7;
      spec.relief = relief;
      spec.seed = s;
      const long step = max_column_step(crack_mask(spec));
      for (int w : {1, 3, 5}) {
        if (step > w) continue;
        spec.width = w;
        EXPECT_EQ(components(crack_mask(spec)), 1) << "seed " << s << " relief " << relief << " width " << w;
        ++checked;
      }
    }
  EXPECT_GT(checked, 20);
}

TEST(CrackMask, ParallelSurfacesStayInTheirHalves) {
  CrackSpec spec;
  spec.n = 6;
  spec.width = 3;
  spec.arrangement = Arrangement::parallel;
  spec.seed = 4;
  spec.relief = 0.0;
  BinaryMask flat = crack_mask(spec);
  EXPECT_EQ(flat.count(), 2u * 3 * 64 * 64);
  EXPECT_TRUE(flat.get(5, 5, 16));
  EXPECT_TRUE(flat.get(5, 5, 48));
  spec.relief = 1.0;
  BinaryMask m = crack_mask(spec);
  std::size_t lower = 0, upper = 0;
  m.for_each_set([&](std::size_t i) { (i / (64 * 64) < 32 ? lower : upper)++; });
  EXPECT_GE(lower, 3u * 64 * 64);
  EXPECT_GE(upper, 3u * 64 * 64);
  EXPECT_EQ(components(m), 2);
}

TEST(CrackMask, OrthogonalIsUnionOfTwoPlanes) {
  CrackSpec spec;
  spec.n = 5;
  spec.width = 1;
  spec.relief = 0.0;
  spec.arrangement = Arrangement::orthogonal;
  BinaryMask m = crack_mask(spec);
  EXPECT_EQ(m.count(), 2u * 32 * 32 - 32);
  EXPECT_TRUE(m.get(3, 5, 16));
  EXPECT_TRUE(m.get(16, 5, 3));
}

TEST(Phantom, SinglePhaseMeanMatchesMatrix) {
  PhantomSpec s;
  s.dims = {40, 40, 40};
  s.matrix = {120.0, 10.0};
  s.blur_sigma = 0.0;
  s.seed = 3;
  Volume v = synthesize_background(s);
  double mean = 0;
  for (float x : v.samples()) mean += x;
  mean /= double(v.size());
  EXPECT_NEAR(mean, 120.0, 3 * 10.0 / std::sqrt(double(v.size())));
}

TEST(Phantom, PoreFractionIsReached) {
  PhantomSpec s;
  s.dims = {128, 128, 128};
  s.pore = {0.05, 4.0, 10.0, {50.0, 5.0}};
  s.seed = 17;
  Phantom p = synthesize_phantom(s);
  std::size_t pores = 0;
  for (Phase ph : p.phase) pores += ph == Phase::pore;
  EXPECT_NEAR(double(pores) / double(p.phase.size()), 0.05, 0.015);
}

TEST(Phantom, PoresAreDarkerAndDeterministic) {
  PhantomSpec s = phantom_preset("realistic", {48, 48, 48}, 8);
  Phantom a = synthesize_phantom(s), b = synthesize_phantom(s);
  EXPECT_EQ(a.gray, b.gray);
  double pore = 0, matrix = 0;
  std::size_t np = 0, nm = 0;
  for (std::size_t i = 0; i < a.phase.size(); ++i) {
    if (a.phase[i] == Phase::pore) pore += a.gray[i], ++np;
    if (a.phase[i] == Phase::matrix) matrix += a.gray[i], ++nm;
  }
  ASSERT_GT(np, 0u);
  EXPECT_LT(pore / double(np), matrix / double(nm));
}

TEST(Phantom, InfeasibleCombinationFails) {
  PhantomSpec s;
  s.dims = {16, 16, 16};
  s.aggregate = {0.9, 7.0, 8.0, {1.0, 0.0}};
  s.pore = {0.05, 7.0, 8.0, {0.0, 0.0}};
  EXPECT_THROW(synthesize_phantom(s), GenerationError);
  s.aggregate.fraction = 0.6;
  s.pore.fraction = 0.5;
  EXPECT_THROW(synthesize_phantom(s), ParameterError);
  EXPECT_THROW(phantom_preset("marble", {8, 8, 8}, 0), ConfigError);
}

TEST(Composite, EmptyMaskIsBitIdentical) {
  Volume bg = testing_support::random_volume({12, 12, 12}, 1, 0, 255);
  EXPECT_EQ(composite(bg, BinaryMask(bg.dims()), {40.0, 5.0, 1.0, 2}), bg);
}

TEST(Composite, ZeroSpreadGivesExactMean) {
  Volume bg = testing_support::random_volume({12, 12, 12}, 1, 0, 255);
  BinaryMask crack = testing_support::plate_mask(bg.dims(), 6, 1);
  Volume out = composite(bg, crack, {37.0, 0.0, 0.0, 2});
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], crack.get(i) ? 37.0f : bg[i]);
}

TEST(Composite, CrackSampleMeanMatchesPoreStatistics) {
  PhantomSpec ps = phantom_preset("realistic", {64, 64, 64}, 5);
  Volume bg = synthesize_background(ps);
  BinaryMask crack = rasterize_crack(constant_field(6, 0.0), 3, Axis::z);
  Volume out = composite(bg, crack, {ps.pore.gray.mean, ps.pore.gray.std, 0.0, 11});
  double mean = 0;
  crack.for_each_set([&](std::size_t i) { mean += out[i]; });
  const double n = double(crack.count());
  EXPECT_NEAR(mean / n, ps.pore.gray.mean, 2 * ps.pore.gray.std / std::sqrt(n));
}

TEST(Composite, SmoothingStaysNearTheCrack) {
  Volume bg = testing_support::random_volume({20, 20, 20}, 2, 100, 200);
  BinaryMask crack = testing_support::plate_mask(bg.dims(), 10, 1);
  Volume out = composite(bg, crack, {30.0, 4.0, 1.0, 3});
  BinaryMask support = dilate(crack, 3);
  std::size_t changed_inside = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!support.get(i))
      ASSERT_EQ(out[i], bg[i]);
    else
      changed_inside += out[i] != bg[i];
  }
  EXPECT_EQ(changed_inside, support.count());
}

TEST(Composite, DimsMismatchIsShapeError) {
  EXPECT_THROW(composite(Volume({4, 4, 4}), BinaryMask({4, 4, 5}), {}), ShapeError);
}

TEST(Dataset, PaperRecipeSplits) {
  nlohmann::json j = {{"seed", 1}, {"size", 8}, {"groups", nlohmann::json::array()}};
  for (int w : {1, 3, 5}) j["groups"].push_back({{"width", w}, {"single", 8}, {"parallel", 6}, {"orthogonal", 6}});
  Recipe r = parse_recipe(j);
  ASSERT_EQ(r.entries.size(), 60u);
  auto splits = assign_splits(r.entries);
  std::map<Split, int> n;
  std::map<std::pair<int, Split>, int> per_width;
  for (std::size_t i = 0; i < splits.size(); ++i) ++n[splits[i]], ++per_width[{r.entries[i].crack.width, splits[i]}];
  EXPECT_EQ(n[Split::train], 9);
  EXPECT_EQ(n[Split::val], 3);
  EXPECT_EQ(n[Split::eval] + n[Split::val], 51);
  for (int w : {1, 3, 5}) EXPECT_EQ(per_width[std::make_pair(w, Split::train)], 3);
  EXPECT_EQ(r.entries[0].id, "w1_single_01");
}

TEST(Dataset, EmptyRecipeWritesOnlyManifest) {
  auto dir = testing_support::scratch_dir("ds");
  auto m = generate_dataset(parse_recipe(nlohmann::json::object()), dir / "out");
  EXPECT_TRUE(m["entries"].empty());
  EXPECT_FALSE(fs::exists(dir / "out" / "gray"));
  EXPECT_EQ(std::distance(fs::directory_iterator(dir / "out"), fs::directory_iterator()), 1);
  fs::remove_all(dir);
}

TEST(Dataset, RerunIsByteIdenticalAndManifestLoads) {
  auto dir = testing_support::scratch_dir("ds");
  nlohmann::json j = {{"seed", 9}, {"size", 16}, {"phantom", "high_contrast"},
                      {"groups", {{{"width", 3}, {"single", 2}, {"parallel", 1}}}}};
  generate_dataset(parse_recipe(j), dir / "a");
  generate_dataset(parse_recipe(j), dir / "b");
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    auto rel = fs::relative(e.path(), dir / "a");
    EXPECT_EQ(slurp(e.path()), slurp(dir / "b" / rel)) << rel;
  }
  Manifest m = load_manifest(dir / "a" / "manifest.json");
  ASSERT_EQ(m.entries.size(), 3u);
  EXPECT_EQ(m.select(Split::train).size(), 2u);
  EXPECT_EQ(m.select(Split::val).size(), 1u);
  EXPECT_EQ(read_mask(m.entries[1].truth_path).dims(), (Dims{16, 16, 16}));
  fs::remove_all(dir);
}

TEST(Dataset, CompositeSeedDoesNotTouchTruth) {
  nlohmann::json j = {{"seed", 4}, {"size", 16}, {"entries", {{{"width", 1}}}}};
  RecipeEntry e = parse_recipe(j).entries[0];
  GeneratedImage a = generate_image(e);
  e.composite.seed ^= 0xdeadbeef;
  GeneratedImage b = generate_image(e);
  EXPECT_EQ(a.truth, b.truth);
  EXPECT_FALSE(a.gray == b.gray);
}

TEST(Dataset, ShippedRecipesKeepMostVoxelsAndConnectedWidthOne) {
  for (const char* name : {"full60.json", "acceptance_w3.json", "acceptance_degradation.json"}) {
    Recipe r = load_recipe(fs::path(CRACKSEG_DATA_DIR) / "recipes" / name);
    ASSERT_FALSE(r.entries.empty()) << name;
    std::set<std::pair<int, Arrangement>> seen;
    for (const auto& e : r.entries) {
      if (!seen.insert({e.crack.width, e.crack.arrangement}).second) continue;
      const BinaryMask m = crack_mask(e.crack);
      // composite only touches the crack dilated by one step
      EXPECT_LT(double(dilate(m, 3).count()), 0.1 * double(m.size())) << name << " " << e.id;
      if (e.crack.width == 1 && e.crack.arrangement == Arrangement::single) {
        EXPECT_LE(max_column_step(m), 1) << name << " " << e.id;
        EXPECT_EQ(components(m), 1) << name << " " << e.id;
      }
    }
  }
}

TEST(Dataset, BadRecipes) {
  EXPECT_THROW(parse_recipe({{"size", 100}, {"entries", {{{"width", 1}}}}}), ConfigError);
  EXPECT_THROW(parse_recipe({{"size", 16}, {"entries", {{{"width", 2}}}}}), ParameterError);
  EXPECT_THROW(parse_recipe({{"size", 16}, {"entries", {{{"arrangement", "diagonal"}}}}}), ConfigError);
  EXPECT_THROW(parse_recipe({{"size", 16}, {"entries", {{{"id", "a"}}, {{"id", "a"}}}}}), ConfigError);
  EXPECT_THROW(parse_recipe({{"size", 16}, {"entries", {{{"background", "x.vol"}}}}}), ConfigError);
}
