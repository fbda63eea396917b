#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "nnoodkit/errors.hpp"

namespace nnoodkit {

/// Spatial extents in pixels, slowest-varying axis first.
using Shape = std::vector<std::size_t>;
/// A spatial position (or origin) in pixels.
using Coord = std::vector<std::size_t>;

inline constexpr std::size_t kMaxRank = 3;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

/// Row-major strides; the last axis is contiguous.
inline std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t a = shape.size(); a-- > 1;) strides[a - 1] = strides[a] * shape[a];
  return strides;
}

inline std::size_t offset_of(const std::vector<std::size_t>& strides, const Coord& c) noexcept {
  std::size_t off = 0;
  for (std::size_t a = 0; a < c.size(); ++a) off += c[a] * strides[a];
  return off;
}

inline std::string to_string(const Shape& shape) {
  std::string out = "(";
  for (std::size_t a = 0; a < shape.size(); ++a) {
    if (a) out += ", ";
    out += std::to_string(shape[a]);
  }
  return out + ")";
}

inline void check_spatial_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > kMaxRank)
    throw UnsupportedRankError("spatial rank must be 1, 2 or 3, got " + std::to_string(shape.size()));
  for (auto extent : shape)
    if (extent == 0) throw ShapeError("zero extent in shape " + to_string(shape));
}

/// Calls fn(coord) for every coordinate of `shape` in row-major order.
template <typename Fn>
void for_each_coord(const Shape& shape, Fn&& fn) {
  if (shape.empty() || numel(shape) == 0) return;
  Coord c(shape.size(), 0);
  const std::size_t total = numel(shape);
  for (std::size_t n = 0; n < total; ++n) {
    fn(static_cast<const Coord&>(c));
    for (std::size_t a = shape.size(); a-- > 0;) {
      if (++c[a] < shape[a]) break;
      c[a] = 0;
    }
  }
}

/// Dense single-valued tensor over a spatial shape.
template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  explicit Grid(Shape shape, T fill = T{})
      : shape_(std::move(shape)), strides_(strides_of(shape_)), data_(numel(shape_), fill) {}
  Grid(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), strides_(strides_of(shape_)), data_(std::move(data)) {
    if (data_.size() != numel(shape_))
      throw ShapeError("grid data size " + std::to_string(data_.size()) + " does not match shape " +
                       to_string(shape_));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  const std::vector<std::size_t>& strides() const noexcept { return strides_; }

  std::size_t offset(const Coord& c) const noexcept { return offset_of(strides_, c); }
  Coord coord(std::size_t flat) const {
    Coord c(shape_.size());
    for (std::size_t a = 0; a < shape_.size(); ++a) {
      c[a] = flat / strides_[a];
      flat %= strides_[a];
    }
    return c;
  }

  T& operator[](std::size_t flat) noexcept { return data_[flat]; }
  const T& operator[](std::size_t flat) const noexcept { return data_[flat]; }
  T& at(const Coord& c) noexcept { return data_[offset(c)]; }
  const T& at(const Coord& c) const noexcept { return data_[offset(c)]; }

  std::span<T> values() & noexcept { return data_; }
  std::span<const T> values() const& noexcept { return data_; }
  // A span into a temporary would dangle.
  void values() && = delete;
  const std::vector<T>& data() const noexcept { return data_; }

  bool operator==(const Grid&) const = default;

 private:
  Shape shape_;
  std::vector<std::size_t> strides_;
  std::vector<T> data_;
};

/// Multi-channel tensor indexed [channel, spatial...].
template <typename T>
class Image {
 public:
  using value_type = T;

  Image() = default;
  Image(std::size_t channels, Shape spatial, T fill = T{})
      : channels_(channels), spatial_(std::move(spatial)), data_(channels_ * numel(spatial_), fill) {}
  Image(std::size_t channels, Shape spatial, std::vector<T> data)
      : channels_(channels), spatial_(std::move(spatial)), data_(std::move(data)) {
    if (data_.size() != channels_ * numel(spatial_))
      throw ShapeError("image data size " + std::to_string(data_.size()) + " does not match " +
                       std::to_string(channels_) + " x " + to_string(spatial_));
  }

  std::size_t channels() const noexcept { return channels_; }
  const Shape& spatial_shape() const noexcept { return spatial_; }
  std::size_t rank() const noexcept { return spatial_.size(); }
  std::size_t pixels() const noexcept { return numel(spatial_); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<T> channel(std::size_t c) & noexcept { return {data_.data() + c * pixels(), pixels()}; }
  void channel(std::size_t) && = delete;
  std::span<const T> channel(std::size_t c) const& noexcept {
    return {data_.data() + c * pixels(), pixels()};
  }
  std::span<T> values() & noexcept { return data_; }
  std::span<const T> values() const& noexcept { return data_; }
  // A span into a temporary would dangle.
  void values() && = delete;
  const std::vector<T>& data() const noexcept { return data_; }

  T& operator()(std::size_t c, std::size_t flat) noexcept { return data_[c * pixels() + flat]; }
  const T& operator()(std::size_t c, std::size_t flat) const noexcept {
    return data_[c * pixels() + flat];
  }

  bool operator==(const Image&) const = default;

 private:
  std::size_t channels_ = 0;
  Shape spatial_;
  std::vector<T> data_;
};

using NdImage = Image<float>;
/// Nonzero marks a foreground pixel.
using ForegroundMask = Grid<std::uint8_t>;
/// Pixel-wise anomaly scores or labels in [0, 1].
using AnomalyMap = Grid<float>;

template <typename T>
void validate(const Image<T>& img) {
  check_spatial_shape(img.spatial_shape());
  if (img.channels() == 0) throw ShapeError("image has no channels");
  if constexpr (std::is_floating_point_v<T>) {
    for (auto v : img.values())
      if (!std::isfinite(v)) throw InvalidArgument("image contains non-finite values");
  }
}

inline bool same_geometry(const NdImage& a, const NdImage& b) {
  return a.channels() == b.channels() && a.spatial_shape() == b.spatial_shape();
}

inline void check_window(const Shape& shape, const Coord& origin, const Shape& extent) {
  if (origin.size() != shape.size() || extent.size() != shape.size())
    throw ShapeError("window rank does not match shape " + to_string(shape));
  for (std::size_t a = 0; a < shape.size(); ++a)
    if (extent[a] == 0 || origin[a] + extent[a] > shape[a])
      throw ShapeError("window origin " + to_string(origin) + " extent " + to_string(extent) +
                       " exceeds shape " + to_string(shape));
}

/// Copies the window [origin, origin + extent) of every channel.
template <typename T>
Image<T> crop(const Image<T>& img, const Coord& origin, const Shape& extent) {
  check_window(img.spatial_shape(), origin, extent);
  Image<T> out(img.channels(), extent);
  const auto strides = strides_of(img.spatial_shape());
  std::size_t k = 0;
  std::vector<std::size_t> src_offsets(numel(extent));
  Coord p(extent.size());
  for_each_coord(extent, [&](const Coord& c) {
    for (std::size_t a = 0; a < c.size(); ++a) p[a] = origin[a] + c[a];
    src_offsets[k++] = offset_of(strides, p);
  });
  for (std::size_t ch = 0; ch < img.channels(); ++ch) {
    auto src = img.channel(ch);
    auto dst = out.channel(ch);
    for (std::size_t i = 0; i < src_offsets.size(); ++i) dst[i] = src[src_offsets[i]];
  }
  return out;
}

template <typename T>
Grid<T> crop(const Grid<T>& grid, const Coord& origin, const Shape& extent) {
  check_window(grid.shape(), origin, extent);
  Grid<T> out(extent);
  std::size_t k = 0;
  Coord p(extent.size());
  for_each_coord(extent, [&](const Coord& c) {
    for (std::size_t a = 0; a < c.size(); ++a) p[a] = origin[a] + c[a];
    out[k++] = grid.at(p);
  });
  return out;
}

/// Writes `patch` into `dest` at `origin`.
template <typename T>
void paste(Image<T>& dest, const Image<T>& patch, const Coord& origin) {
  check_window(dest.spatial_shape(), origin, patch.spatial_shape());
  if (patch.channels() != dest.channels()) throw ShapeError("channel count mismatch in paste");
  const auto strides = strides_of(dest.spatial_shape());
  std::size_t k = 0;
  Coord p(origin.size());
  for_each_coord(patch.spatial_shape(), [&](const Coord& c) {
    for (std::size_t a = 0; a < c.size(); ++a) p[a] = origin[a] + c[a];
    const auto off = offset_of(strides, p);
    for (std::size_t ch = 0; ch < dest.channels(); ++ch) dest(ch, off) = patch(ch, k);
    ++k;
  });
}

}  // namespace nnoodkit
