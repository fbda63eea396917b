#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "nnoodkit/plan.hpp"
#include "nnoodkit/sampling.hpp"
#include "oracles.hpp"

using namespace nnoodkit;

TEST(AxisPositions, Examples) {
  EXPECT_EQ(axis_positions(10, 4), (std::vector<std::size_t>{0, 2, 4, 6}));
  EXPECT_EQ(axis_positions(4, 4), (std::vector<std::size_t>{0}));
  EXPECT_EQ(axis_positions(7, 4), (std::vector<std::size_t>{0, 2, 3}));
  EXPECT_THROW(axis_positions(3, 4), ShapeError);
  EXPECT_THROW(axis_positions(3, 0), ShapeError);
}

TEST(AxisPositions, CoverageAndFlushEdges) {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t p = std::uniform_int_distribution<std::size_t>(1, 40)(gen);
    const std::size_t d = std::uniform_int_distribution<std::size_t>(p, 4 * p)(gen);
    const auto pos = axis_positions(d, p);
    ASSERT_EQ(pos.front(), 0u);
    ASSERT_EQ(pos.back() + p, d);
    std::vector<int> covered(d, 0);
    for (auto o : pos)
      for (std::size_t i = 0; i < p; ++i) covered[o + i] = 1;
    for (int c : covered) ASSERT_EQ(c, 1) << "D=" << d << " P=" << p;
    for (std::size_t i = 1; i < pos.size(); ++i) {
      ASSERT_GT(pos[i], pos[i - 1]);
      ASSERT_LE(pos[i] - pos[i - 1], (p + 1) / 2);  // never wider than half a patch, rounded
    }
  }
}

TEST(InferenceGrid, CartesianProduct) {
  const PatchGrid grid = inference_grid({10, 7}, {4, 4});
  ASSERT_EQ(grid.positions.size(), 12u);
  EXPECT_EQ(grid.positions.front(), (Coord{0, 0}));
  EXPECT_EQ(grid.positions[1], (Coord{0, 2}));
  EXPECT_EQ(grid.positions.back(), (Coord{6, 3}));
  EXPECT_THROW(inference_grid({10, 7}, {4}), ShapeError);
  EXPECT_EQ(inference_grid({5, 6, 7}, {5, 6, 7}).positions.size(), 1u);
}

TEST(TrainingDraws, OversampledCounts) {
  EXPECT_EQ(oversampled_count(10), 3u);
  EXPECT_EQ(oversampled_count(1), 1u);
  for (std::size_t b = 1; b <= 200; ++b)
    EXPECT_EQ(oversampled_count(b), static_cast<std::size_t>(std::ceil(0.3 * static_cast<double>(b) - 1e-9)));
}

TEST(TrainingDraws, OversampledContainCentres) {
  const PatchGrid grid = inference_grid({64, 64}, {16, 16});
  const std::vector<Coord> centres{{5, 60}, {40, 20}};
  Rng rng(3);
  for (std::size_t batch : {1, 2, 7, 10, 33}) {
    const TrainingDraw draw = sample_training_locations(grid, centres, batch, rng);
    ASSERT_TRUE(draw.anomaly_feasible);
    ASSERT_EQ(draw.origins.size(), batch);
    ASSERT_EQ(draw.oversampled, oversampled_count(batch));
    for (std::size_t k = 0; k < draw.oversampled; ++k) {
      bool hit = false;
      for (const auto& c : centres) hit = hit || patch_contains(draw.origins[k], grid.patch_size, c);
      EXPECT_TRUE(hit);
    }
  }
}

TEST(TrainingDraws, InfeasibleFallsBackToUniform) {
  const PatchGrid grid = inference_grid({32, 32}, {16, 16});
  const std::vector<Coord> outside{{100, 100}};
  Rng rng(1);
  const TrainingDraw draw = sample_training_locations(grid, outside, 10, rng);
  EXPECT_FALSE(draw.anomaly_feasible);
  EXPECT_EQ(draw.oversampled, 0u);
  EXPECT_EQ(draw.origins.size(), 10u);
  EXPECT_THROW(sample_training_locations(PatchGrid{{4, 4}, {}}, outside, 10, rng), InvalidArgument);
  EXPECT_THROW(sample_training_locations(grid, outside, 0, rng), InvalidArgument);
}

TEST(TrainingDraws, UniformOverNinePositions) {
  const PatchGrid grid = inference_grid({8, 8}, {4, 4});
  ASSERT_EQ(grid.positions.size(), 9u);
  Rng rng(2024);
  std::vector<long long> counts(9, 0);
  const TrainingDraw draw = sample_training_locations(grid, {}, 100000, rng);
  for (const auto& o : draw.origins) ++counts[(o[0] / 2) * 3 + o[1] / 2];
  EXPECT_TRUE(oracle::uniform_within_5_sigma(counts));
}

TEST(ExtractPatch, Examples) {
  const NdImage img = fixtures::random_image({6, 5}, 2, 1);
  EXPECT_EQ(extract_patch(img, {0, 0}, {6, 5}), img);
  const NdImage px = extract_patch(img, {3, 2}, {1, 1});
  EXPECT_EQ(px(1, 0), img(1, 3 * 5 + 2));
  NdImage copy = img;
  paste(copy, extract_patch(img, {1, 1}, {3, 3}), {1, 1});
  EXPECT_EQ(copy, img);
  EXPECT_THROW(extract_patch(img, {4, 0}, {3, 3}), Error);
}

TEST(Aggregate, ConstantTiles) {
  const Shape shape{20, 18}, patch{8, 8};
  std::vector<Tile> tiles;
  for (const auto& o : inference_grid(shape, patch).positions) tiles.push_back({o, Grid<float>(patch, 0.375f)});
  const AnomalyMap out = aggregate_tiles(tiles, shape, patch);
  for (float v : out.values()) EXPECT_FLOAT_EQ(v, 0.375f);
}

TEST(Aggregate, SingleTileIsIdentity) {
  Grid<float> scores({5, 4}, 0.0f);
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = static_cast<float>(i) / 20.0f;
  const std::vector<Tile> tiles{{{0, 0}, scores}};
  EXPECT_EQ(aggregate_tiles(tiles, {5, 4}, {5, 4}), scores);
}

TEST(Aggregate, HalfOverlap1d) {
  // Tiles [0, 8) with 0 and [4, 12) with 1: inside the overlap the weight of the second
  // tile grows monotonically with the index.
  const std::vector<Tile> tiles{{{0}, Grid<float>({8}, 0.0f)}, {{4}, Grid<float>({8}, 1.0f)}};
  const AnomalyMap out = aggregate_tiles(tiles, {12}, {8});
  const Grid<double> w = tile_weights({8});
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(out[i], 0.0f);
  for (std::size_t i = 8; i < 12; ++i) EXPECT_EQ(out[i], 1.0f);
  for (std::size_t i = 4; i < 8; ++i) {
    const double expected = w[i - 4] / (w[i] + w[i - 4]);
    EXPECT_NEAR(out[i], expected, 1e-6);
    EXPECT_GT(out[i], 0.0f);
    EXPECT_LT(out[i], 1.0f);
    if (i > 4) {
      EXPECT_GT(out[i], out[i - 1]);
    }
  }
}

TEST(Aggregate, RangeAndErrors) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<float> u(-2.0f, 3.0f);
  const Shape shape{17, 23}, patch{8, 8};
  std::vector<Tile> tiles;
  float lo = 1e9f, hi = -1e9f;
  for (const auto& o : inference_grid(shape, patch).positions) {
    Grid<float> s(patch, 0.0f);
    for (auto& v : s.values()) {
      v = u(gen);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    tiles.push_back({o, s});
  }
  const AnomalyMap out = aggregate_tiles(tiles, shape, patch);
  for (float v : out.values()) {
    EXPECT_GE(v, lo);
    EXPECT_LE(v, hi);
  }
  tiles.erase(tiles.begin());
  EXPECT_THROW(aggregate_tiles(tiles, shape, patch), InvalidArgument);
  const std::vector<Tile> wrong{{{0, 0}, Grid<float>({4, 4}, 0.0f)}};
  EXPECT_THROW(aggregate_tiles(wrong, shape, patch), ShapeError);
}

TEST(TileWeights, GaussianWithFloor) {
  const Grid<double> w = tile_weights({8});
  // sigma = 1, centre 3.5: index 0 is 3.5 sigma away.
  EXPECT_NEAR(w[0], std::exp(-3.5 * 3.5 / 2.0), 1e-15);
  EXPECT_DOUBLE_EQ(w[3], w[4]);
  const Grid<double> wide = tile_weights({64});
  EXPECT_GE(*std::min_element(wide.values().begin(), wide.values().end()), 1e-8);
  EXPECT_DOUBLE_EQ(tile_weights({1, 1})[0], 1.0);
}

TEST(Plan, PatchSizeExamples) {
  EXPECT_EQ(plan_patch_size({1024, 1024}), (Shape{256, 256}));
  EXPECT_EQ(plan_patch_size({70, 120}), (Shape{64, 112}));
  EXPECT_EQ(plan_patch_size({20, 40}), (Shape{20, 32}));
  EXPECT_EQ(plan_patch_size({200, 100, 40}), (Shape{96, 96, 32}));
}

TEST(Plan, MedianShape) {
  const std::vector<Shape> odd{{10, 3}, {30, 1}, {20, 2}};
  EXPECT_EQ(median_shape(odd), (Shape{20, 2}));
  const std::vector<Shape> even{{10, 3}, {31, 1}, {20, 2}, {40, 8}};
  EXPECT_EQ(median_shape(even), (Shape{25, 2}));
  EXPECT_THROW(median_shape(std::span<const Shape>{}), InvalidArgument);
}

TEST(Plan, FromDataset) {
  const std::vector<NdImage> images{NdImage(1, {40, 50}, std::vector<float>(2000, 1.0f)),
                                    NdImage(1, {60, 40}, std::vector<float>(2400, -2.5f))};
  const ExperimentPlan plan = make_plan(images, {});
  EXPECT_EQ(plan.median_shape, (Shape{50, 45}));
  EXPECT_EQ(plan.patch_size, (Shape{48, 32}));
  EXPECT_EQ(plan.dataset_min, -2.5);
  EXPECT_EQ(plan.sample_count, 2u);
  EXPECT_FALSE(plan.foreground);
  ForegroundMask a({40, 50}, 0), b({60, 40}, 0);
  a[0] = 1;
  b[0] = b[41] = 1;
  const std::vector<ForegroundMask> masks{a, b};
  const ExperimentPlan with_fg = make_plan(images, masks);
  ASSERT_TRUE(with_fg.foreground);
  EXPECT_EQ(with_fg.foreground->avg_extent, (std::vector<double>{1.5, 1.5}));
  EXPECT_EQ(with_fg.foreground->avg_area, 1.5);
}
