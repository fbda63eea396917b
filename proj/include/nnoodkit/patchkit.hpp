#pragma once

// Patch-based anomaly building blocks: shape creation, spatial and intensity
// transforms, blending into a destination image, and labelling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "nnoodkit/errors.hpp"
#include "nnoodkit/ndimage.hpp"
#include "nnoodkit/rng.hpp"

namespace nnoodkit {

/// Inclusive (lo, hi) extent bounds per axis.
using ExtentBounds = std::vector<std::pair<std::size_t, std::size_t>>;

/// Placement of a patch in a destination frame. Footprint marks which pixels of the
/// bounding box belong to the patch.
struct PatchSpec {
  Coord origin;
  Shape extent;
  ForegroundMask footprint;

  static PatchSpec rectangle(Coord origin, Shape extent) {
    ForegroundMask fp(extent, 1);
    return {std::move(origin), std::move(extent), std::move(fp)};
  }

  std::size_t footprint_pixels() const {
    return static_cast<std::size_t>(std::count_if(footprint.values().begin(), footprint.values().end(),
                                                  [](std::uint8_t v) { return v != 0; }));
  }

  /// Integer centre of the bounding box in the destination frame.
  Coord centre() const {
    Coord c(origin.size());
    for (std::size_t a = 0; a < origin.size(); ++a) c[a] = origin[a] + extent[a] / 2;
    return c;
  }

  bool operator==(const PatchSpec&) const = default;
};

inline void check_patch(const PatchSpec& spec, const Shape& image_shape) {
  check_window(image_shape, spec.origin, spec.extent);
  if (spec.footprint.shape() != spec.extent) throw ShapeError("patch footprint does not match its extent");
  if (spec.footprint_pixels() == 0) throw ShapeError("patch footprint is empty");
}

/// Calls fn(destination_flat, patch_flat) for every footprint pixel.
template <typename Fn>
void for_each_footprint_pixel(const PatchSpec& spec, const Shape& image_shape, Fn&& fn) {
  const auto strides = strides_of(image_shape);
  std::size_t k = 0;
  Coord p(spec.origin.size());
  for_each_coord(spec.extent, [&](const Coord& c) {
    if (spec.footprint[k]) {
      for (std::size_t a = 0; a < c.size(); ++a) p[a] = spec.origin[a] + c[a];
      fn(offset_of(strides, p), k);
    }
    ++k;
  });
}

inline void check_bounds(const Shape& image_shape, const ExtentBounds& bounds) {
  if (bounds.size() != image_shape.size()) throw InvalidArgument("extent bounds rank does not match image rank");
  for (std::size_t a = 0; a < bounds.size(); ++a) {
    const auto [lo, hi] = bounds[a];
    if (lo < 1 || lo > hi || hi > image_shape[a])
      throw InvalidArgument("infeasible extent bounds (" + std::to_string(lo) + ", " + std::to_string(hi) +
                            ") on axis " + std::to_string(a) + " of extent " + std::to_string(image_shape[a]));
  }
}

inline Shape sample_extent(const ExtentBounds& bounds, Rng& rng) {
  Shape extent(bounds.size());
  for (std::size_t a = 0; a < bounds.size(); ++a) extent[a] = rng.uniform_int(bounds[a].first, bounds[a].second);
  return extent;
}

inline Coord sample_origin(const Shape& image_shape, const Shape& extent, Rng& rng) {
  Coord origin(extent.size());
  for (std::size_t a = 0; a < extent.size(); ++a) origin[a] = rng.uniform_int(0, image_shape[a] - extent[a]);
  return origin;
}

/// Axis-aligned rectangle: extent uniform within bounds, origin uniform over valid placements.
inline PatchSpec make_rect_patch(const Shape& image_shape, const ExtentBounds& bounds, Rng& rng) {
  check_bounds(image_shape, bounds);
  Shape extent = sample_extent(bounds, rng);
  Coord origin = sample_origin(image_shape, extent, rng);
  return PatchSpec::rectangle(std::move(origin), std::move(extent));
}

// ---------------------------------------------------------------------------
// Transforms

struct Resize {
  std::vector<double> scale;
  bool operator==(const Resize&) const = default;
};
struct Rotate {
  double degrees = 0.0;
  std::size_t axis0 = 0;
  std::size_t axis1 = 1;
  bool operator==(const Rotate&) const = default;
};
struct Flip {
  std::size_t axis = 0;
  bool operator==(const Flip&) const = default;
};
struct Brightness {
  double factor = 1.0;
  bool operator==(const Brightness&) const = default;
};
struct Contrast {
  double factor = 1.0;
  bool operator==(const Contrast&) const = default;
};

using PatchTransform = std::variant<Resize, Rotate, Flip, Brightness, Contrast>;

inline bool is_spatial(const PatchTransform& t) {
  return std::holds_alternative<Resize>(t) || std::holds_alternative<Rotate>(t) || std::holds_alternative<Flip>(t);
}

/// Patch pixels plus the subset of them that carries valid content.
struct PatchContent {
  NdImage pixels;
  ForegroundMask support;

  static PatchContent full(NdImage pixels) {
    ForegroundMask support(pixels.spatial_shape(), 1);
    return {std::move(pixels), std::move(support)};
  }
};

namespace detail {

inline Shape resized_extent(const Shape& extent, const std::vector<double>& scale) {
  if (scale.size() != extent.size()) throw InvalidArgument("resize scale rank does not match patch rank");
  Shape out(extent.size());
  for (std::size_t a = 0; a < extent.size(); ++a) {
    if (!(scale[a] > 0.0)) throw InvalidArgument("resize scale must be positive");
    out[a] = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(extent[a]) * scale[a])));
  }
  return out;
}

// Snaps values within 1e-9 of an integer so that exact rotations stay exact.
inline double snap(double v) {
  const double r = std::round(v);
  return std::abs(v - r) < 1e-9 ? r : v;
}

}  // namespace detail

/// Align-corners linear resampling to `target` extents, axis by axis.
inline NdImage resize_linear(const NdImage& img, const Shape& target) {
  check_spatial_shape(target);
  if (target.size() != img.rank()) throw ShapeError("resize target rank mismatch");
  std::vector<double> cur(img.data().begin(), img.data().end());
  Shape shape = img.spatial_shape();
  const std::size_t channels = img.channels();
  for (std::size_t a = 0; a < shape.size(); ++a) {
    if (shape[a] == target[a]) continue;
    Shape next_shape = shape;
    next_shape[a] = target[a];
    const auto in_strides = strides_of(shape);
    const auto out_strides = strides_of(next_shape);
    const std::size_t in_px = numel(shape);
    const std::size_t out_px = numel(next_shape);
    std::vector<double> next(channels * out_px);
    const double ratio = target[a] > 1 ? static_cast<double>(shape[a] - 1) / static_cast<double>(target[a] - 1) : 0.0;
    for (std::size_t flat = 0; flat < out_px; ++flat) {
      const std::size_t i = (flat / out_strides[a]) % target[a];
      // Same flat position with axis a's index removed, re-expressed in input strides.
      const std::size_t outer = flat / (out_strides[a] * target[a]);
      const std::size_t inner = flat % out_strides[a];
      const std::size_t base = outer * in_strides[a] * shape[a] + inner;
      const double src = detail::snap(static_cast<double>(i) * ratio);
      const auto i0 = std::min(static_cast<std::size_t>(std::floor(src)), shape[a] - 1);
      const auto i1 = std::min(i0 + 1, shape[a] - 1);
      const double w = src - static_cast<double>(i0);
      for (std::size_t c = 0; c < channels; ++c) {
        const double v0 = cur[c * in_px + base + i0 * in_strides[a]];
        const double v1 = cur[c * in_px + base + i1 * in_strides[a]];
        next[c * out_px + flat] = w == 0.0 ? v0 : v0 + w * (v1 - v0);
      }
    }
    cur = std::move(next);
    shape = std::move(next_shape);
  }
  std::vector<float> out(cur.size());
  std::transform(cur.begin(), cur.end(), out.begin(), [](double v) { return static_cast<float>(v); });
  return NdImage(channels, shape, std::move(out));
}

inline ForegroundMask resize_nearest(const ForegroundMask& mask, const Shape& target) {
  ForegroundMask out(target);
  Coord src(target.size());
  std::size_t k = 0;
  for_each_coord(target, [&](const Coord& c) {
    for (std::size_t a = 0; a < c.size(); ++a) {
      const double ratio = target[a] > 1 ? static_cast<double>(mask.shape()[a] - 1) / static_cast<double>(target[a] - 1) : 0.0;
      src[a] = std::min(static_cast<std::size_t>(std::lround(static_cast<double>(c[a]) * ratio)), mask.shape()[a] - 1);
    }
    out[k++] = mask.at(src);
  });
  return out;
}

/// Linear resampling rotated counter-clockwise about the patch centre in the
/// (axis0, axis1) plane. Output pixels whose source falls outside the input
/// support are dropped from the returned support.
inline PatchContent rotate_linear(const PatchContent& in, const Rotate& r) {
  const Shape& shape = in.pixels.spatial_shape();
  if (shape.size() < 2 || r.axis0 >= shape.size() || r.axis1 >= shape.size() || r.axis0 == r.axis1)
    throw InvalidArgument("rotation plane is invalid for a rank-" + std::to_string(shape.size()) + " patch");
  if (!(r.degrees > -180.0 && r.degrees <= 180.0)) throw InvalidArgument("rotation angle must lie in (-180, 180]");
  const double theta = r.degrees * std::numbers::pi / 180.0;
  double cs = std::cos(theta);
  double sn = std::sin(theta);
  for (double* v : {&cs, &sn}) {
    if (std::abs(*v) < 1e-12) *v = 0.0;
    if (std::abs(std::abs(*v) - 1.0) < 1e-12) *v = std::copysign(1.0, *v);
  }
  const std::size_t a0 = r.axis0, a1 = r.axis1;
  const double c0 = (static_cast<double>(shape[a0]) - 1.0) / 2.0;
  const double c1 = (static_cast<double>(shape[a1]) - 1.0) / 2.0;

  PatchContent out{NdImage(in.pixels.channels(), shape, 0.0f), ForegroundMask(shape, 0)};
  const auto strides = strides_of(shape);
  Coord src(shape.size());
  std::size_t flat = 0;
  for_each_coord(shape, [&](const Coord& c) {
    const double d0 = static_cast<double>(c[a0]) - c0;
    const double d1 = static_cast<double>(c[a1]) - c1;
    const double s0 = detail::snap(c0 + cs * d0 + sn * d1);
    const double s1 = detail::snap(c1 - sn * d0 + cs * d1);
    const std::size_t cur = flat++;
    if (s0 < 0.0 || s1 < 0.0 || s0 > static_cast<double>(shape[a0] - 1) || s1 > static_cast<double>(shape[a1] - 1))
      return;
    const auto i0 = static_cast<std::size_t>(std::floor(s0));
    const auto j0 = static_cast<std::size_t>(std::floor(s1));
    const double w0 = s0 - static_cast<double>(i0);
    const double w1 = s1 - static_cast<double>(j0);
    struct Tap {
      std::size_t off;
      double w;
    };
    Tap taps[4];
    std::size_t ntaps = 0;
    for (int di = 0; di < 2; ++di) {
      for (int dj = 0; dj < 2; ++dj) {
        const double w = (di ? w0 : 1.0 - w0) * (dj ? w1 : 1.0 - w1);
        if (w == 0.0) continue;
        src = c;
        src[a0] = i0 + static_cast<std::size_t>(di);
        src[a1] = j0 + static_cast<std::size_t>(dj);
        const std::size_t off = offset_of(strides, src);
        if (!in.support[off]) return;
        taps[ntaps++] = {off, w};
      }
    }
    out.support[cur] = 1;
    for (std::size_t ch = 0; ch < in.pixels.channels(); ++ch) {
      double v = 0.0;
      for (std::size_t t = 0; t < ntaps; ++t) v += taps[t].w * in.pixels(ch, taps[t].off);
      out.pixels(ch, cur) = static_cast<float>(v);
    }
  });
  return out;
}

inline PatchContent flip(const PatchContent& in, std::size_t axis) {
  const Shape& shape = in.pixels.spatial_shape();
  if (axis >= shape.size()) throw InvalidArgument("flip axis out of range");
  PatchContent out = in;
  const auto strides = strides_of(shape);
  Coord src;
  std::size_t flat = 0;
  for_each_coord(shape, [&](const Coord& c) {
    src = c;
    src[axis] = shape[axis] - 1 - c[axis];
    const std::size_t off = offset_of(strides, src);
    out.support[flat] = in.support[off];
    for (std::size_t ch = 0; ch < in.pixels.channels(); ++ch) out.pixels(ch, flat) = in.pixels(ch, off);
    ++flat;
  });
  return out;
}

inline PatchContent apply_spatial(const PatchContent& in, const PatchTransform& t) {
  if (const auto* r = std::get_if<Resize>(&t)) {
    const Shape target = detail::resized_extent(in.pixels.spatial_shape(), r->scale);
    return {resize_linear(in.pixels, target), resize_nearest(in.support, target)};
  }
  if (const auto* r = std::get_if<Rotate>(&t)) return rotate_linear(in, *r);
  if (const auto* f = std::get_if<Flip>(&t)) return flip(in, f->axis);
  throw InvalidArgument("apply_spatial called with an intensity transform");
}

inline NdImage apply_spatial(const NdImage& in, const PatchTransform& t) {
  return apply_spatial(PatchContent::full(in), t).pixels;
}

/// Scales intensities about the dataset minimum: min + factor * (v - min).
inline NdImage apply_brightness(const NdImage& patch, double factor, double dataset_min) {
  if (!(factor > 0.0)) throw InvalidArgument("brightness factor must be positive");
  NdImage out = patch;
  for (auto& v : out.values()) v = static_cast<float>(dataset_min + factor * (static_cast<double>(v) - dataset_min));
  return out;
}

/// Scales intensities about the per-channel patch mean.
inline NdImage apply_contrast(const NdImage& patch, double factor) {
  if (!(factor >= 0.0)) throw InvalidArgument("contrast factor must be non-negative");
  NdImage out = patch;
  for (std::size_t c = 0; c < out.channels(); ++c) {
    auto ch = out.channel(c);
    long double sum = 0;
    for (float v : ch) sum += v;
    const double mu = static_cast<double>(sum / static_cast<long double>(ch.size()));
    for (auto& v : ch) v = static_cast<float>(mu + factor * (static_cast<double>(v) - mu));
  }
  return out;
}

/// Applies `transforms` as resize, then rotate/flip, then intensity; order within a
/// stage follows the list.
inline PatchContent apply_transforms(PatchContent content, std::span<const PatchTransform> transforms,
                                     double dataset_min) {
  auto stage = [](const PatchTransform& t) {
    if (std::holds_alternative<Resize>(t)) return 0;
    return is_spatial(t) ? 1 : 2;
  };
  for (int s = 0; s < 3; ++s) {
    for (const auto& t : transforms) {
      if (stage(t) != s) continue;
      if (s < 2) {
        content = apply_spatial(content, t);
      } else if (const auto* b = std::get_if<Brightness>(&t)) {
        content.pixels = apply_brightness(content.pixels, b->factor, dataset_min);
      } else {
        content.pixels = apply_contrast(content.pixels, std::get<Contrast>(t).factor);
      }
    }
  }
  return content;
}

// ---------------------------------------------------------------------------
// Blending

/// Inside the footprint: (1 - alpha) * dest + alpha * src. Elsewhere dest.
inline NdImage alpha_blend(const NdImage& dest, const NdImage& src_patch, const PatchSpec& spec, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in [0, 1]");
  check_patch(spec, dest.spatial_shape());
  if (src_patch.spatial_shape() != spec.extent || src_patch.channels() != dest.channels())
    throw ShapeError("source patch shape " + to_string(src_patch.spatial_shape()) + " does not match patch extent " +
                     to_string(spec.extent));
  NdImage out = dest;
  for_each_footprint_pixel(spec, dest.spatial_shape(), [&](std::size_t dst, std::size_t k) {
    for (std::size_t c = 0; c < dest.channels(); ++c) {
      const double d = dest(c, dst);
      const double s = src_patch(c, k);
      out(c, dst) = static_cast<float>(d + alpha * (s - d));
    }
  });
  return out;
}

/// Copies patch pixels into dest wherever the footprint is set.
inline NdImage paste_patch(const NdImage& dest, const NdImage& src_patch, const PatchSpec& spec) {
  check_patch(spec, dest.spatial_shape());
  if (src_patch.spatial_shape() != spec.extent || src_patch.channels() != dest.channels())
    throw ShapeError("source patch does not match patch extent");
  NdImage out = dest;
  for_each_footprint_pixel(spec, dest.spatial_shape(), [&](std::size_t dst, std::size_t k) {
    for (std::size_t c = 0; c < dest.channels(); ++c) out(c, dst) = src_patch(c, k);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Labelling

inline AnomalyMap label_interpolation(const PatchSpec& spec, double alpha, const Shape& image_shape) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in [0, 1]");
  check_patch(spec, image_shape);
  AnomalyMap label(image_shape, 0.0f);
  const auto a = static_cast<float>(alpha);
  for_each_footprint_pixel(spec, image_shape, [&](std::size_t dst, std::size_t) { label[dst] = a; });
  return label;
}

/// Logistic label curve L(d) = 1 / (1 + exp(-k (d - d0))) with L(0) = 0.1 and L(q40) = 0.99.
struct LogisticFit {
  double k = 0.0;
  double d0 = 0.0;
  double q40 = 0.0;

  double operator()(double d) const { return 1.0 / (1.0 + std::exp(-k * (d - d0))); }
  bool valid() const { return k > 0.0 && q40 > 0.0 && std::isfinite(k) && std::isfinite(d0); }
  bool operator==(const LogisticFit&) const = default;
};

inline LogisticFit fit_logistic(double q40) {
  if (!(q40 > 0.0) || !std::isfinite(q40)) throw InvalidArgument("saturation difference must be positive");
  const double k = (std::log(9.0) + std::log(99.0)) / q40;
  return {k, std::log(9.0) / k, q40};
}

/// Mean absolute channel difference passed through the logistic fit on the union
/// of footprints; zero outside them and wherever the difference is zero.
inline AnomalyMap label_logistic_diff(const NdImage& orig, const NdImage& altered, std::span<const PatchSpec> footprints,
                                      const LogisticFit& fit) {
  if (!same_geometry(orig, altered)) throw ShapeError("original and altered images differ in shape");
  if (!fit.valid()) throw InvalidArgument("invalid logistic fit");
  const Shape& shape = orig.spatial_shape();
  ForegroundMask covered(shape, 0);
  for (const auto& spec : footprints) {
    check_patch(spec, shape);
    for_each_footprint_pixel(spec, shape, [&](std::size_t dst, std::size_t) { covered[dst] = 1; });
  }
  AnomalyMap label(shape, 0.0f);
  const auto channels = static_cast<double>(orig.channels());
  for (std::size_t p = 0; p < label.size(); ++p) {
    if (!covered[p]) continue;
    double d = 0.0;
    for (std::size_t c = 0; c < orig.channels(); ++c)
      d += std::abs(static_cast<double>(altered(c, p)) - static_cast<double>(orig(c, p)));
    d /= channels;
    if (d > 0.0) label[p] = static_cast<float>(fit(d));
  }
  return label;
}

}  // namespace nnoodkit
