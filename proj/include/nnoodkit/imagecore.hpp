#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <limits>
#include <span>
#include <vector>

#include "nnoodkit/errors.hpp"
#include "nnoodkit/ndimage.hpp"

namespace nnoodkit {

/// Linearly interpolated percentile (q in [0, 100]) of a non-empty sample.
inline double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidArgument("percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

/// Standardises all values of the image to zero mean and unit standard deviation.
/// A constant image maps to zeros.
inline NdImage zscore_normalize(const NdImage& img) {
  const auto vals = img.values();
  NdImage out(img.channels(), img.spatial_shape(), 0.0f);
  if (vals.empty()) return out;
  long double sum = 0;
  for (float v : vals) sum += v;
  const double mean = static_cast<double>(sum / static_cast<long double>(vals.size()));
  long double ss = 0;
  for (float v : vals) {
    const double d = static_cast<double>(v) - mean;
    ss += d * d;
  }
  const double sd = std::sqrt(static_cast<double>(ss / static_cast<long double>(vals.size())));
  if (!(sd > 0.0) || !std::isfinite(sd)) return out;
  auto dst = out.values();
  for (std::size_t i = 0; i < vals.size(); ++i)
    dst[i] = static_cast<float>((static_cast<double>(vals[i]) - mean) / sd);
  return out;
}

/// One coordinate channel per spatial axis with values spanning [-1, 1] along that axis.
inline NdImage positional_encoding(const Shape& spatial_shape) {
  check_spatial_shape(spatial_shape);
  const std::size_t d = spatial_shape.size();
  NdImage out(d, spatial_shape, 0.0f);
  const auto strides = strides_of(spatial_shape);
  for (std::size_t a = 0; a < d; ++a) {
    auto ch = out.channel(a);
    const std::size_t extent = spatial_shape[a];
    if (extent == 1) continue;
    for (std::size_t flat = 0; flat < ch.size(); ++flat) {
      const std::size_t i = (flat / strides[a]) % extent;
      ch[flat] = static_cast<float>(2.0 * static_cast<double>(i) / static_cast<double>(extent - 1) - 1.0);
    }
  }
  return out;
}

/// Appends the positional-encoding channels after the image channels.
inline NdImage with_positional_encoding(const NdImage& img) {
  const NdImage enc = positional_encoding(img.spatial_shape());
  std::vector<float> data(img.data());
  data.insert(data.end(), enc.data().begin(), enc.data().end());
  return NdImage(img.channels() + enc.channels(), img.spatial_shape(), std::move(data));
}

namespace detail {

// out(i) = k[0] f(i-1) + k[1] f(i) + k[2] f(i+1) along `axis`, edge replicated.
inline std::vector<double> filter_axis(const std::vector<double>& in, const Shape& shape, std::size_t axis,
                                       const std::array<double, 3>& k) {
  std::vector<double> out(in.size());
  const auto strides = strides_of(shape);
  const std::size_t stride = strides[axis];
  const std::size_t extent = shape[axis];
  for (std::size_t flat = 0; flat < in.size(); ++flat) {
    const std::size_t i = (flat / stride) % extent;
    const std::size_t prev = i > 0 ? flat - stride : flat;
    const std::size_t next = i + 1 < extent ? flat + stride : flat;
    out[flat] = k[0] * in[prev] + k[1] * in[flat] + k[2] * in[next];
  }
  return out;
}

}  // namespace detail

/// Euclidean norm of the per-axis Sobel responses of the channel-mean image.
inline Grid<double> sobel_magnitude_grid(const NdImage& img) {
  const Shape& shape = img.spatial_shape();
  if (shape.size() < 2 || shape.size() > 3)
    throw UnsupportedRankError("Sobel gradient needs spatial rank 2 or 3, got " + std::to_string(shape.size()));
  const std::size_t n = img.pixels();
  std::vector<double> mean(n, 0.0);
  for (std::size_t c = 0; c < img.channels(); ++c) {
    auto ch = img.channel(c);
    for (std::size_t i = 0; i < n; ++i) mean[i] += ch[i];
  }
  for (auto& v : mean) v /= static_cast<double>(img.channels());

  constexpr std::array<double, 3> kSmooth{1.0, 2.0, 1.0};
  constexpr std::array<double, 3> kDerivative{-1.0, 0.0, 1.0};
  std::vector<double> sq(n, 0.0);
  for (std::size_t a = 0; a < shape.size(); ++a) {
    std::vector<double> g = detail::filter_axis(mean, shape, a, kDerivative);
    for (std::size_t b = 0; b < shape.size(); ++b)
      if (b != a) g = detail::filter_axis(g, shape, b, kSmooth);
    for (std::size_t i = 0; i < n; ++i) sq[i] += g[i] * g[i];
  }
  for (auto& v : sq) v = std::sqrt(v);
  return Grid<double>(shape, std::move(sq));
}

inline NdImage sobel_magnitude(const NdImage& img) {
  const Grid<double> mag = sobel_magnitude_grid(img);
  NdImage out(1, img.spatial_shape());
  auto dst = out.channel(0);
  for (std::size_t i = 0; i < mag.size(); ++i) dst[i] = static_cast<float>(mag[i]);
  return out;
}

/// Growth threshold used by foreground_mask: pixels strictly below it are passable.
inline double region_growing_threshold(const NdImage& img, const Grid<double>& magnitude) {
  const auto [lo, hi] = std::minmax_element(img.values().begin(), img.values().end());
  const double range = static_cast<double>(*hi) - static_cast<double>(*lo);
  std::vector<double> nonzero;
  for (double m : magnitude.values())
    if (m > 0.0) nonzero.push_back(m);
  if (nonzero.empty()) return 0.0;
  return std::max(1e-6 * range, percentile(std::move(nonzero), 10.0));
}

/// Foreground as the complement of the background grown from every image corner
/// through face-adjacent low-gradient pixels. Only meaningful for datasets with a
/// uniform background.
inline ForegroundMask foreground_mask(const NdImage& img) {
  validate(img);
  const Grid<double> mag = sobel_magnitude_grid(img);
  const Shape& shape = img.spatial_shape();
  const std::size_t d = shape.size();
  const double tau = region_growing_threshold(img, mag);
  if (tau <= 0.0) throw EmptyForegroundError("image has no gradient; every pixel is background");

  ForegroundMask mask(shape, 1);
  std::vector<std::uint8_t> visited(mag.size(), 0);
  std::deque<std::size_t> frontier;
  for (std::size_t corner = 0; corner < (std::size_t{1} << d); ++corner) {
    Coord c(d);
    for (std::size_t a = 0; a < d; ++a) c[a] = (corner >> a) & 1U ? shape[a] - 1 : 0;
    const std::size_t flat = mag.offset(c);
    if (visited[flat] || mag[flat] >= tau) continue;
    visited[flat] = 1;
    frontier.push_back(flat);
  }
  const auto& strides = mag.strides();
  while (!frontier.empty()) {
    const std::size_t flat = frontier.front();
    frontier.pop_front();
    mask[flat] = 0;
    for (std::size_t a = 0; a < d; ++a) {
      const std::size_t i = (flat / strides[a]) % shape[a];
      const std::size_t nbrs[2] = {i > 0 ? flat - strides[a] : flat, i + 1 < shape[a] ? flat + strides[a] : flat};
      for (std::size_t q : nbrs) {
        if (q == flat || visited[q] || mag[q] >= tau) continue;
        visited[q] = 1;
        frontier.push_back(q);
      }
    }
  }
  if (std::none_of(mask.values().begin(), mask.values().end(), [](std::uint8_t v) { return v != 0; }))
    throw EmptyForegroundError("region growing classified every pixel as background");
  return mask;
}

struct ForegroundStats {
  std::vector<double> avg_extent;
  double avg_area = 0.0;

  bool operator==(const ForegroundStats&) const = default;
};

struct BoundingBox {
  Coord origin;
  Shape extent;
};

/// Tight bounding box of the nonzero pixels; throws on an empty mask.
inline BoundingBox bounding_box(const ForegroundMask& mask) {
  const std::size_t d = mask.rank();
  Coord lo(d, std::numeric_limits<std::size_t>::max());
  Coord hi(d, 0);
  bool any = false;
  for (std::size_t flat = 0; flat < mask.size(); ++flat) {
    if (!mask[flat]) continue;
    any = true;
    const Coord c = mask.coord(flat);
    for (std::size_t a = 0; a < d; ++a) {
      lo[a] = std::min(lo[a], c[a]);
      hi[a] = std::max(hi[a], c[a]);
    }
  }
  if (!any) throw EmptyForegroundError("mask has no foreground pixels");
  Shape extent(d);
  for (std::size_t a = 0; a < d; ++a) extent[a] = hi[a] - lo[a] + 1;
  return {lo, extent};
}

inline ForegroundStats foreground_stats(std::span<const ForegroundMask> masks) {
  if (masks.empty()) throw InvalidArgument("foreground statistics need at least one mask");
  const std::size_t d = masks.front().rank();
  ForegroundStats stats{std::vector<double>(d, 0.0), 0.0};
  for (const auto& m : masks) {
    if (m.rank() != d) throw ShapeError("masks differ in spatial rank");
    const BoundingBox box = bounding_box(m);
    for (std::size_t a = 0; a < d; ++a) stats.avg_extent[a] += static_cast<double>(box.extent[a]);
    stats.avg_area += static_cast<double>(std::count_if(m.values().begin(), m.values().end(),
                                                        [](std::uint8_t v) { return v != 0; }));
  }
  const auto n = static_cast<double>(masks.size());
  for (auto& e : stats.avg_extent) e /= n;
  stats.avg_area /= n;
  return stats;
}

}  // namespace nnoodkit
