#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "nnoodkit/poisson.hpp"
#include "oracles.hpp"

using namespace nnoodkit;

namespace {

GuidanceField random_guidance(const Shape& extent, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  GuidanceField g;
  for (std::size_t a = 0; a < extent.size(); ++a) {
    Grid<double> comp(extent, 0.0);
    for (auto& v : comp.values()) v = u(gen);
    g.components.push_back(std::move(comp));
  }
  return g;
}

GuidanceField zero_guidance(const Shape& extent) {
  GuidanceField g;
  for (std::size_t a = 0; a < extent.size(); ++a) g.components.emplace_back(extent, 0.0);
  return g;
}

// Ellipse-shaped footprint inscribed in the box.
PatchSpec ellipse_patch(Coord origin, Shape extent) {
  PatchSpec spec = PatchSpec::rectangle(std::move(origin), extent);
  const double cy = (static_cast<double>(extent[0]) - 1.0) / 2.0, cx = (static_cast<double>(extent[1]) - 1.0) / 2.0;
  for (std::size_t y = 0; y < extent[0]; ++y)
    for (std::size_t x = 0; x < extent[1]; ++x) {
      const double dy = (static_cast<double>(y) - cy) / (cy + 0.5), dx = (static_cast<double>(x) - cx) / (cx + 0.5);
      spec.footprint[y * extent[1] + x] = dy * dy + dx * dx <= 1.0 ? 1 : 0;
    }
  return spec;
}

// Solver output written back into a full image-sized channel.
std::vector<double> full_channel(const NdImage& dest, const PatchSpec& spec, const PoissonSolution& sol) {
  std::vector<double> out(dest.channel(0).begin(), dest.channel(0).end());
  for_each_footprint_pixel(spec, dest.spatial_shape(), [&](std::size_t dst, std::size_t k) { out[dst] = sol.values[k]; });
  return out;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST(Guidance, Examples) {
  const NdImage src(1, {1, 2}, std::vector<float>{0.0f, 1.0f});
  const NdImage dest(1, {1, 2}, std::vector<float>{3.0f, 0.0f});
  EXPECT_DOUBLE_EQ(build_guidance(src, dest, GuidanceMode::mixed).components[1][0], -3.0);

  const NdImage src2(1, {1, 2}, std::vector<float>{0.0f, 2.0f});
  const NdImage dest2(1, {1, 2}, std::vector<float>{2.0f, 0.0f});
  EXPECT_DOUBLE_EQ(build_guidance(src2, dest2, GuidanceMode::mixed).components[1][0], 2.0);

  const NdImage flat(1, {1, 2}, 5.0f);
  EXPECT_DOUBLE_EQ(build_guidance(src2, flat, GuidanceMode::interpolated, 0.5).components[1][0], 1.0);
}

TEST(Guidance, ForwardDifferenceLayout) {
  const NdImage img(1, {2, 3}, std::vector<float>{0, 1, 3, 6, 10, 15});
  const auto g = build_guidance(img, img, GuidanceMode::source);
  ASSERT_EQ(g.components.size(), 2u);
  EXPECT_EQ(g.components[0].values()[0], 6.0);
  EXPECT_EQ(g.components[0].values()[3], 0.0);  // last slice along axis 0
  EXPECT_EQ(g.components[1].values()[1], 2.0);
  EXPECT_EQ(g.components[1].values()[2], 0.0);
}

TEST(Guidance, Errors) {
  const NdImage a(1, {4, 4}, 0.0f), b(1, {4, 5}, 0.0f);
  EXPECT_THROW(build_guidance(a, b, GuidanceMode::source), ShapeError);
  EXPECT_THROW(build_guidance(a, a, GuidanceMode::interpolated, 1.5), InvalidArgument);
  EXPECT_THROW(build_guidance(a, a, GuidanceMode::source, 1.0, 1), InvalidArgument);
}

TEST(Poisson, SingleUnknownIsNeighbourMean) {
  NdImage dest(1, {5, 5}, 0.0f);
  dest(0, 1 * 5 + 2) = 1.0f;
  dest(0, 3 * 5 + 2) = 2.0f;
  dest(0, 2 * 5 + 1) = 3.0f;
  dest(0, 2 * 5 + 3) = 6.0f;
  const PatchSpec spec = PatchSpec::rectangle({1, 1}, {3, 3});
  const PoissonSolution sol = solve_poisson(dest, spec, zero_guidance(spec.extent));
  EXPECT_NEAR(sol.values[4], 3.0, 1e-12);
  EXPECT_EQ(sol.values[1], 1.0);  // boundary ring keeps dest
  EXPECT_LE(sol.residual_norm, 1e-6);
}

TEST(Poisson, DestGradientReproducesDest) {
  const NdImage dest = fixtures::texture({24, 20}, 1, 3);
  const PatchSpec spec = ellipse_patch({3, 2}, {17, 15});
  const NdImage patch = crop(dest, spec.origin, spec.extent);
  const PoissonSolution sol = solve_poisson(dest, spec, build_guidance(patch, patch, GuidanceMode::source));
  for_each_footprint_pixel(spec, dest.spatial_shape(),
                           [&](std::size_t dst, std::size_t k) { EXPECT_NEAR(sol.values[k], dest(0, dst), 1e-6); });
}

TEST(Poisson, MatchesDenseOracle8x8) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const NdImage dest = fixtures::random_image({12, 12}, 1, seed);
    const PatchSpec spec = PatchSpec::rectangle({2, 2}, {8, 8});
    const GuidanceField g = random_guidance(spec.extent, 100 + seed);
    const PoissonSolution sol = solve_poisson(dest, spec, g);
    const auto oracle = oracle::direct_poisson(dest, spec, g.components, 0, false);
    EXPECT_LE(max_abs_diff(full_channel(dest, spec, sol), oracle), 1e-6) << "seed " << seed;
    EXPECT_LE(oracle::relative_residual(dest, spec, g.components, 0, full_channel(dest, spec, sol)), 1e-6);
  }
}

TEST(Poisson, MatchesBandOracleOnIrregularFootprint) {
  const NdImage dest = fixtures::random_image({40, 40}, 1, 9);
  const PatchSpec spec = ellipse_patch({4, 5}, {32, 30});
  const GuidanceField g = random_guidance(spec.extent, 77, 3.0);
  const PoissonSolution sol = solve_poisson(dest, spec, g);
  const auto oracle = oracle::direct_poisson(dest, spec, g.components, 0, true);
  EXPECT_LE(max_abs_diff(full_channel(dest, spec, sol), oracle), 1e-6);
}

TEST(Poisson, BorderTouchingPatch) {
  // Flush with the top-left corner: out-of-image neighbours drop from the stencil.
  const NdImage dest = fixtures::random_image({10, 9}, 1, 4);
  const PatchSpec spec = PatchSpec::rectangle({0, 0}, {7, 6});
  const GuidanceField g = random_guidance(spec.extent, 5);
  const PoissonSolution sol = solve_poisson(dest, spec, g);
  const auto oracle = oracle::direct_poisson(dest, spec, g.components, 0, false);
  EXPECT_LE(max_abs_diff(full_channel(dest, spec, sol), oracle), 1e-6);
  EXPECT_NE(sol.values[0], static_cast<double>(dest(0, 0)));  // the corner is an unknown
}

TEST(Poisson, ThreeDimensional) {
  const NdImage dest = fixtures::random_image({8, 9, 7}, 1, 6);
  const PatchSpec spec = PatchSpec::rectangle({1, 2, 1}, {6, 6, 5});
  const GuidanceField g = random_guidance(spec.extent, 8);
  const PoissonSolution sol = solve_poisson(dest, spec, g);
  const auto oracle = oracle::direct_poisson(dest, spec, g.components, 0, false);
  EXPECT_LE(max_abs_diff(full_channel(dest, spec, sol), oracle), 1e-6);
}

TEST(Poisson, MaximumPrinciple) {
  const NdImage dest = fixtures::random_image({30, 30}, 1, 12);
  const PatchSpec spec = ellipse_patch({3, 4}, {24, 22});
  const PoissonSolution sol = solve_poisson(dest, spec, zero_guidance(spec.extent));
  // Boundary values: footprint pixels that are not unknowns.
  const auto direct = oracle::assemble(dest, spec, zero_guidance(spec.extent).components, 0);
  std::vector<char> unknown(dest.pixels(), 0);
  for (auto f : direct.unknown_flat) unknown[f] = 1;
  double lo = 1e300, hi = -1e300;
  for_each_footprint_pixel(spec, dest.spatial_shape(), [&](std::size_t dst, std::size_t) {
    if (unknown[dst]) return;
    lo = std::min(lo, static_cast<double>(dest(0, dst)));
    hi = std::max(hi, static_cast<double>(dest(0, dst)));
  });
  for_each_footprint_pixel(spec, dest.spatial_shape(), [&](std::size_t, std::size_t k) {
    EXPECT_GE(sol.values[k], lo - 1e-9);
    EXPECT_LE(sol.values[k], hi + 1e-9);
  });
}

TEST(Poisson, LinearInGuidanceWithZeroBoundary) {
  const NdImage dest(1, {20, 20}, 0.0f);
  const PatchSpec spec = PatchSpec::rectangle({2, 3}, {15, 14});
  const GuidanceField g1 = random_guidance(spec.extent, 1), g2 = random_guidance(spec.extent, 2);
  const double alpha = 0.7, beta = -1.3;
  GuidanceField mix = g1;
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t i = 0; i < mix.components[a].size(); ++i)
      mix.components[a][i] = alpha * g1.components[a][i] + beta * g2.components[a][i];
  const auto s1 = solve_poisson(dest, spec, g1), s2 = solve_poisson(dest, spec, g2), s = solve_poisson(dest, spec, mix);
  for (std::size_t i = 0; i < s.values.size(); ++i)
    EXPECT_NEAR(s.values[i], alpha * s1.values[i] + beta * s2.values[i], 1e-5);
}

TEST(Poisson, Errors) {
  const NdImage dest(1, {6, 6}, 1.0f);
  const PatchSpec whole = PatchSpec::rectangle({0, 0}, {6, 6});
  EXPECT_THROW(solve_poisson(dest, whole, zero_guidance(whole.extent)), InvalidArgument);
  const PatchSpec spec = PatchSpec::rectangle({1, 1}, {4, 4});
  EXPECT_THROW(solve_poisson(dest, spec, zero_guidance({3, 4})), ShapeError);
  EXPECT_THROW(solve_poisson(dest, spec, zero_guidance({4, 4}), 1), InvalidArgument);
  EXPECT_THROW(solve_poisson(dest, PatchSpec::rectangle({3, 3}, {4, 4}), zero_guidance({4, 4})), Error);
}

TEST(Poisson, IterationCapRaisesSolverError) {
  const NdImage dest = fixtures::random_image({40, 40}, 1, 2);
  const PatchSpec spec = PatchSpec::rectangle({4, 4}, {32, 32});
  PoissonOptions opts;
  opts.iteration_factor = 0;  // cap of one iteration
  try {
    solve_poisson(dest, spec, random_guidance(spec.extent, 3), 0, opts);
    FAIL() << "expected SolverError";
  } catch (const SolverError& e) {
    EXPECT_GT(e.residual(), 1e-6);
  }
}

TEST(SeamlessClone, SelfCloneIsIdentity) {
  const NdImage dest = fixtures::texture({32, 28}, 2, 5);
  const PatchSpec spec = ellipse_patch({5, 4}, {20, 18});
  const NdImage out = seamless_clone(dest, crop(dest, spec.origin, spec.extent), spec, GuidanceMode::source);
  for (std::size_t i = 0; i < dest.values().size(); ++i) EXPECT_NEAR(out.values()[i], dest.values()[i], 1e-6);
}

TEST(SeamlessClone, ConstantsGiveDest) {
  const NdImage dest(1, {16, 16}, 2.5f);
  const NdImage src(1, {8, 8}, -4.0f);
  const PatchSpec spec = PatchSpec::rectangle({4, 4}, {8, 8});
  const NdImage out = seamless_clone(dest, src, spec, GuidanceMode::source);
  for (float v : out.values()) EXPECT_NEAR(v, 2.5f, 1e-6);
}

TEST(SeamlessClone, OutsideFootprintBitIdentical) {
  const NdImage dest = fixtures::random_image({24, 24}, 3, 10);
  const NdImage src = fixtures::random_image({12, 14}, 3, 11);
  const PatchSpec spec = ellipse_patch({6, 5}, {12, 14});
  for (auto mode : {GuidanceMode::source, GuidanceMode::mixed}) {
    const NdImage out = seamless_clone(dest, src, spec, mode);
    std::vector<char> inside(dest.pixels(), 0);
    for_each_footprint_pixel(spec, dest.spatial_shape(), [&](std::size_t dst, std::size_t) { inside[dst] = 1; });
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t p = 0; p < dest.pixels(); ++p)
        if (!inside[p]) {
          EXPECT_EQ(out(c, p), dest(c, p));
        }
  }
}

TEST(SeamlessClone, InterpolatedEndpoints) {
  const NdImage dest = fixtures::texture({20, 20}, 1, 1);
  const NdImage src = fixtures::texture({10, 10}, 1, 2);
  const PatchSpec spec = PatchSpec::rectangle({5, 5}, {10, 10});
  const NdImage at0 = seamless_clone(dest, src, spec, GuidanceMode::interpolated, 0.0);
  for (std::size_t i = 0; i < dest.values().size(); ++i) EXPECT_NEAR(at0.values()[i], dest.values()[i], 1e-5);
  const NdImage at1 = seamless_clone(dest, src, spec, GuidanceMode::interpolated, 1.0);
  const NdImage full = seamless_clone(dest, src, spec, GuidanceMode::source);
  for (std::size_t i = 0; i < dest.values().size(); ++i) EXPECT_NEAR(at1.values()[i], full.values()[i], 1e-5);
}
