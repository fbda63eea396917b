#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "nnoodkit/errors.hpp"
#include "nnoodkit/ndimage.hpp"
#include "nnoodkit/rng.hpp"

namespace nnoodkit {

/// Sliding-window patch origins used at inference (and sampled from in training).
struct PatchGrid {
  Shape patch_size;
  std::vector<Coord> positions;
};

/// Origins along one axis: ceil((D - P) / (P / 2)) + 1 evenly spread, rounded positions.
inline std::vector<std::size_t> axis_positions(std::size_t extent, std::size_t patch) {
  if (patch == 0 || patch > extent)
    throw ShapeError("patch extent " + std::to_string(patch) + " does not fit image extent " + std::to_string(extent));
  if (patch == extent) return {0};
  const double span = static_cast<double>(extent - patch);
  const auto steps = static_cast<std::size_t>(std::ceil(span / (static_cast<double>(patch) / 2.0)));
  std::vector<std::size_t> pos;
  for (std::size_t i = 0; i <= steps; ++i)
    pos.push_back(static_cast<std::size_t>(std::lround(static_cast<double>(i) * span / static_cast<double>(steps))));
  pos.erase(std::unique(pos.begin(), pos.end()), pos.end());
  return pos;
}

inline PatchGrid inference_grid(const Shape& image_shape, const Shape& patch_size) {
  check_spatial_shape(image_shape);
  if (patch_size.size() != image_shape.size()) throw ShapeError("patch rank does not match image rank");
  std::vector<std::vector<std::size_t>> axes;
  Shape counts;
  for (std::size_t a = 0; a < image_shape.size(); ++a) {
    axes.push_back(axis_positions(image_shape[a], patch_size[a]));
    counts.push_back(axes.back().size());
  }
  PatchGrid grid{patch_size, {}};
  for_each_coord(counts, [&](const Coord& c) {
    Coord origin(c.size());
    for (std::size_t a = 0; a < c.size(); ++a) origin[a] = axes[a][c[a]];
    grid.positions.push_back(std::move(origin));
  });
  return grid;
}

inline bool patch_contains(const Coord& origin, const Shape& patch, const Coord& point) {
  for (std::size_t a = 0; a < origin.size(); ++a)
    if (point[a] < origin[a] || point[a] >= origin[a] + patch[a]) return false;
  return true;
}

/// Number of anomaly-centred draws in a batch: 30 %, rounded up.
inline std::size_t oversampled_count(std::size_t batch) { return (3 * batch + 9) / 10; }

struct TrainingDraw {
  /// Oversampled draws first, then uniform draws.
  std::vector<Coord> origins;
  std::size_t oversampled = 0;
  /// False when no grid position contains an anomaly centre; all draws are then uniform.
  bool anomaly_feasible = true;
};

inline TrainingDraw sample_training_locations(const PatchGrid& grid, std::span<const Coord> anomaly_centres,
                                              std::size_t batch, Rng& rng) {
  if (grid.positions.empty()) throw InvalidArgument("patch grid is empty");
  if (batch < 1) throw InvalidArgument("batch must be at least 1");
  std::vector<std::size_t> feasible;
  for (std::size_t i = 0; i < grid.positions.size(); ++i)
    for (const auto& c : anomaly_centres)
      if (patch_contains(grid.positions[i], grid.patch_size, c)) {
        feasible.push_back(i);
        break;
      }
  TrainingDraw draw;
  draw.anomaly_feasible = !feasible.empty();
  const std::size_t forced = draw.anomaly_feasible ? oversampled_count(batch) : 0;
  for (std::size_t k = 0; k < forced; ++k)
    draw.origins.push_back(grid.positions[feasible[rng.uniform_int(0, feasible.size() - 1)]]);
  draw.oversampled = forced;
  for (std::size_t k = forced; k < batch; ++k)
    draw.origins.push_back(grid.positions[rng.uniform_int(0, grid.positions.size() - 1)]);
  return draw;
}

inline NdImage extract_patch(const NdImage& img, const Coord& origin, const Shape& patch_size) {
  return crop(img, origin, patch_size);
}

struct Tile {
  Coord origin;
  Grid<float> scores;
};

/// Separable Gaussian centred in the tile, sigma = P / 8 per axis, floored at 1e-8.
inline Grid<double> tile_weights(const Shape& patch_size) {
  std::vector<std::vector<double>> axis_w;
  for (auto p : patch_size) {
    const double sigma = static_cast<double>(p) / 8.0;
    const double centre = (static_cast<double>(p) - 1.0) / 2.0;
    std::vector<double> w(p);
    for (std::size_t i = 0; i < p; ++i) {
      const double x = static_cast<double>(i) - centre;
      w[i] = std::exp(-x * x / (2.0 * sigma * sigma));
    }
    axis_w.push_back(std::move(w));
  }
  Grid<double> out(patch_size, 1.0);
  std::size_t k = 0;
  for_each_coord(patch_size, [&](const Coord& c) {
    double w = 1.0;
    for (std::size_t a = 0; a < c.size(); ++a) w *= axis_w[a][c[a]];
    out[k++] = std::max(w, 1e-8);
  });
  return out;
}

/// Gaussian-weighted mean of overlapping tiles, accumulated in tile order.
inline AnomalyMap aggregate_tiles(std::span<const Tile> tiles, const Shape& image_shape, const Shape& patch_size) {
  check_spatial_shape(image_shape);
  const Grid<double> weights = tile_weights(patch_size);
  std::vector<double> num(numel(image_shape), 0.0);
  std::vector<double> den(num.size(), 0.0);
  const auto strides = strides_of(image_shape);
  Coord p(image_shape.size());
  for (const auto& tile : tiles) {
    if (tile.scores.shape() != patch_size) throw ShapeError("tile shape does not match patch size");
    check_window(image_shape, tile.origin, patch_size);
    std::size_t k = 0;
    for_each_coord(patch_size, [&](const Coord& c) {
      for (std::size_t a = 0; a < c.size(); ++a) p[a] = tile.origin[a] + c[a];
      const std::size_t off = offset_of(strides, p);
      num[off] += weights[k] * static_cast<double>(tile.scores[k]);
      den[off] += weights[k];
      ++k;
    });
  }
  AnomalyMap out(image_shape);
  for (std::size_t i = 0; i < num.size(); ++i) {
    if (den[i] == 0.0) throw InvalidArgument("pixel " + to_string(out.coord(i)) + " is not covered by any tile");
    out[i] = static_cast<float>(num[i] / den[i]);
  }
  return out;
}

}  // namespace nnoodkit
