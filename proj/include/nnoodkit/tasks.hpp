#pragma once

// Synthetic anomaly tasks: x~, y~ = f(x_i, x_j, [m_i, m_j]) with parameters from a
// dataset-level calibration g(X, P).

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nnoodkit/errors.hpp"
#include "nnoodkit/imagecore.hpp"
#include "nnoodkit/ndimage.hpp"
#include "nnoodkit/patchkit.hpp"
#include "nnoodkit/plan.hpp"
#include "nnoodkit/poisson.hpp"
#include "nnoodkit/rng.hpp"

namespace nnoodkit {

enum class TaskId { fpi, cutpaste, pii, nsa, nsa_mixed };

inline std::string_view to_string(TaskId id) {
  switch (id) {
    case TaskId::fpi: return "fpi";
    case TaskId::cutpaste: return "cutpaste";
    case TaskId::pii: return "pii";
    case TaskId::nsa: return "nsa";
    case TaskId::nsa_mixed: return "nsa_mixed";
  }
  return "unknown";
}

inline TaskId parse_task(std::string_view name) {
  if (name == "fpi") return TaskId::fpi;
  if (name == "cutpaste") return TaskId::cutpaste;
  if (name == "pii") return TaskId::pii;
  if (name == "nsa") return TaskId::nsa;
  if (name == "nsa_mixed" || name == "nsa-mixed") return TaskId::nsa_mixed;
  throw InvalidArgument("unknown task '" + std::string(name) + "'");
}

inline bool is_nsa(TaskId id) { return id == TaskId::nsa || id == TaskId::nsa_mixed; }

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  bool operator==(const Range&) const = default;
};

struct JitterParams {
  Range brightness{0.9, 1.1};
  Range contrast{0.9, 1.1};
  Range rotate_degrees{-45.0, 45.0};
  double rotate_probability = 0.5;
  double jitter_probability = 0.5;
  bool operator==(const JitterParams&) const = default;
};

/// Patch size drawn as a fraction of the image area with a random aspect ratio.
struct CutPasteGeometry {
  Range area_ratio{0.02, 0.15};
  Range aspect_ratio{0.3, 3.3};
  bool operator==(const CutPasteGeometry&) const = default;
};

struct TaskParams {
  ExtentBounds extent_bounds;
  std::size_t max_anomalies = 1;
  double min_fg_fraction = 0.0;
  Range alpha_range{0.05, 0.95};
  std::optional<LogisticFit> logistic;
  std::optional<JitterParams> jitter;
  std::optional<CutPasteGeometry> cutpaste;
  double dataset_min = 0.0;

  bool operator==(const TaskParams&) const = default;
};

struct Task {
  TaskId id = TaskId::fpi;
  TaskParams params;
};

/// Record of one patch inserted by a task.
struct AppliedPatch {
  Coord source_origin;
  Shape source_extent;
  PatchSpec dest;
  double alpha = 1.0;
  std::vector<PatchTransform> transforms;
};

struct AugmentedSample {
  NdImage image;
  AnomalyMap label;
  std::vector<Coord> anomaly_centres;
  std::vector<AppliedPatch> patches;
};

inline constexpr std::size_t kPlacementAttempts = 200;
inline constexpr std::size_t kCalibrationAnomalies = 100;

inline void validate(TaskId id, const TaskParams& p) {
  for (const auto& [lo, hi] : p.extent_bounds)
    if (lo < 1 || lo > hi) throw InvalidArgument("task extent bounds must satisfy 1 <= lo <= hi");
  if (p.max_anomalies < 1) throw InvalidArgument("max_anomalies must be positive");
  if (p.min_fg_fraction < 0.0 || p.min_fg_fraction > 1.0) throw InvalidArgument("min_fg_fraction must lie in [0, 1]");
  if (p.alpha_range.lo < 0.0 || p.alpha_range.hi > 1.0 || p.alpha_range.lo > p.alpha_range.hi)
    throw InvalidArgument("alpha_range must be a sub-interval of [0, 1]");
  if (is_nsa(id) != p.logistic.has_value())
    throw InvalidArgument("a logistic label fit is required for NSA tasks and only for them");
  if (p.logistic && !p.logistic->valid()) throw InvalidArgument("invalid logistic fit");
  if (id == TaskId::cutpaste && !p.cutpaste) throw InvalidArgument("CutPaste needs its patch geometry");
}

namespace detail {

inline ExtentBounds scaled_bounds(std::span<const double> extents, double lo_frac, double hi_frac) {
  ExtentBounds out;
  for (double e : extents) {
    const auto lo = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(lo_frac * e)));
    const auto hi = std::max<std::size_t>(lo, static_cast<std::size_t>(std::lround(hi_frac * e)));
    out.emplace_back(lo, hi);
  }
  return out;
}

inline ExtentBounds clamp_bounds(const ExtentBounds& bounds, const Shape& shape) {
  if (bounds.size() != shape.size()) throw ShapeError("task extent bounds rank does not match image rank");
  ExtentBounds out(bounds.size());
  for (std::size_t a = 0; a < bounds.size(); ++a) {
    const std::size_t hi = std::min(bounds[a].second, shape[a]);
    out[a] = {std::min(bounds[a].first, hi), hi};
  }
  return out;
}

inline double foreground_fraction(const ForegroundMask* mask, const Coord& origin, const Shape& extent) {
  if (!mask) return 1.0;
  const Grid<std::uint8_t> window = crop(*mask, origin, extent);
  const auto fg = std::count_if(window.values().begin(), window.values().end(), [](std::uint8_t v) { return v != 0; });
  return static_cast<double>(fg) / static_cast<double>(window.size());
}

// Origin whose window holds at least `min_fg` foreground, by rejection sampling.
inline std::optional<Coord> place_window(const Shape& shape, const Shape& extent, const ForegroundMask* mask,
                                         double min_fg, Rng& rng) {
  for (std::size_t attempt = 0; attempt < kPlacementAttempts; ++attempt) {
    Coord origin = sample_origin(shape, extent, rng);
    if (foreground_fraction(mask, origin, extent) >= min_fg) return origin;
  }
  return std::nullopt;
}

inline Shape cutpaste_extent(const Shape& shape, const CutPasteGeometry& geo, Rng& rng) {
  const double volume = rng.uniform(geo.area_ratio.lo, geo.area_ratio.hi) * static_cast<double>(numel(shape));
  const double aspect = rng.uniform(geo.aspect_ratio.lo, geo.aspect_ratio.hi);
  const auto d = static_cast<double>(shape.size());
  const double base = std::pow(volume, 1.0 / d);
  std::vector<double> side(shape.size(), base);
  if (shape.size() >= 2) {
    side[0] = base * std::sqrt(aspect);
    side[1] = base / std::sqrt(aspect);
  }
  Shape extent(shape.size());
  for (std::size_t a = 0; a < shape.size(); ++a)
    extent[a] = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(side[a])), 1, shape[a]);
  return extent;
}

inline double mean_abs_diff(const NdImage& a, const NdImage& b, std::size_t p) {
  double d = 0.0;
  for (std::size_t c = 0; c < a.channels(); ++c)
    d += std::abs(static_cast<double>(a(c, p)) - static_cast<double>(b(c, p)));
  return d / static_cast<double>(a.channels());
}

}  // namespace detail

/// Clones `content` onto `dest` at `spec` with source or mixed guidance; exposed so
/// the NSA blend can be driven with explicit geometry.
inline NdImage blend_nsa_patch(const NdImage& dest, const NdImage& content, const PatchSpec& spec, TaskId id) {
  if (!is_nsa(id)) throw InvalidArgument("blend_nsa_patch needs an NSA task");
  return seamless_clone(dest, content, spec, id == TaskId::nsa ? GuidanceMode::source : GuidanceMode::mixed);
}

namespace detail {

// One NSA patch: extract from x_j, resize, seamlessly clone into `current`.
inline AppliedPatch nsa_patch(TaskId id, const TaskParams& p, NdImage& current, const NdImage& xj,
                              const ForegroundMask* mi, const ForegroundMask* mj, Rng& rng) {
  const Shape& dst_shape = current.spatial_shape();
  const Shape& src_shape = xj.spatial_shape();
  const ExtentBounds src_bounds = clamp_bounds(p.extent_bounds, src_shape);
  const ExtentBounds dst_bounds = clamp_bounds(p.extent_bounds, dst_shape);
  for (std::size_t attempt = 0; attempt < kPlacementAttempts; ++attempt) {
    const Shape src_extent = sample_extent(src_bounds, rng);
    const Coord src_origin = sample_origin(src_shape, src_extent, rng);
    if (foreground_fraction(mj, src_origin, src_extent) < p.min_fg_fraction) continue;
    const Shape dst_extent = sample_extent(dst_bounds, rng);
    const Coord dst_origin = sample_origin(dst_shape, dst_extent, rng);
    if (foreground_fraction(mi, dst_origin, dst_extent) < p.min_fg_fraction) continue;

    std::vector<double> scale(dst_extent.size());
    for (std::size_t a = 0; a < scale.size(); ++a)
      scale[a] = static_cast<double>(dst_extent[a]) / static_cast<double>(src_extent[a]);
    const NdImage content = resize_linear(crop(xj, src_origin, src_extent), dst_extent);
    PatchSpec spec = PatchSpec::rectangle(dst_origin, dst_extent);
    current = blend_nsa_patch(current, content, spec, id);
    return {src_origin, src_extent, std::move(spec), 1.0, {Resize{std::move(scale)}}};
  }
  throw PlacementError("no NSA patch placement met the foreground constraint after " +
                       std::to_string(kPlacementAttempts) + " attempts");
}

}  // namespace detail

/// Applies the task to x_i using x_j as the secondary sample. Masks may be null when
/// the dataset has no uniform background.
inline AugmentedSample apply_task(const Task& task, const NdImage& xi, const NdImage& xj, const ForegroundMask* mi,
                                  const ForegroundMask* mj, Rng& rng) {
  validate(xi);
  validate(xj);
  validate(task.id, task.params);
  if (xi.channels() != xj.channels() || xi.rank() != xj.rank())
    throw ShapeError("x_i and x_j differ in channels or rank");
  if (mi && mi->shape() != xi.spatial_shape()) throw ShapeError("m_i does not match x_i");
  if (mj && mj->shape() != xj.spatial_shape()) throw ShapeError("m_j does not match x_j");
  const TaskParams& p = task.params;
  const Shape& shape = xi.spatial_shape();

  AugmentedSample out;
  switch (task.id) {
    case TaskId::fpi:
    case TaskId::pii: {
      if (xj.spatial_shape() != shape) throw ShapeError("FPI/PII need x_i and x_j of the same shape");
      const PatchSpec spec = make_rect_patch(shape, detail::clamp_bounds(p.extent_bounds, shape), rng);
      const double alpha = rng.uniform(p.alpha_range.lo, p.alpha_range.hi);
      const NdImage src = crop(xj, spec.origin, spec.extent);
      out.image = task.id == TaskId::fpi ? alpha_blend(xi, src, spec, alpha)
                                         : seamless_clone(xi, src, spec, GuidanceMode::interpolated, alpha);
      out.label = label_interpolation(spec, alpha, shape);
      out.patches.push_back({spec.origin, spec.extent, spec, alpha, {}});
      break;
    }
    case TaskId::cutpaste: {
      const Shape extent = detail::cutpaste_extent(shape, *p.cutpaste, rng);
      const Coord src_origin = sample_origin(shape, extent, rng);
      std::optional<Coord> dst_origin;
      for (std::size_t attempt = 0; attempt < kPlacementAttempts && !dst_origin; ++attempt) {
        Coord candidate = sample_origin(shape, extent, rng);
        if (candidate != src_origin) dst_origin = std::move(candidate);
      }
      if (!dst_origin) throw PlacementError("no CutPaste destination differs from the source location");
      std::vector<PatchTransform> transforms;
      if (p.jitter) {
        const JitterParams& j = *p.jitter;
        if (shape.size() >= 2 && rng.bernoulli(j.rotate_probability))
          transforms.push_back(Rotate{rng.uniform(j.rotate_degrees.lo, j.rotate_degrees.hi), 0, 1});
        if (rng.bernoulli(j.jitter_probability))
          transforms.push_back(Brightness{rng.uniform(j.brightness.lo, j.brightness.hi)});
        if (rng.bernoulli(j.jitter_probability))
          transforms.push_back(Contrast{rng.uniform(j.contrast.lo, j.contrast.hi)});
      }
      PatchContent content =
          apply_transforms(PatchContent::full(crop(xi, src_origin, extent)), transforms, p.dataset_min);
      PatchSpec spec{*dst_origin, extent, std::move(content.support)};
      if (spec.footprint_pixels() == 0) throw PlacementError("rotated CutPaste patch has an empty footprint");
      out.image = paste_patch(xi, content.pixels, spec);
      out.label = label_interpolation(spec, 1.0, shape);
      out.patches.push_back({src_origin, extent, std::move(spec), 1.0, std::move(transforms)});
      break;
    }
    case TaskId::nsa:
    case TaskId::nsa_mixed: {
      const std::size_t n = rng.uniform_int(1, p.max_anomalies);
      NdImage current = xi;
      std::vector<PatchSpec> specs;
      for (std::size_t k = 0; k < n; ++k) {
        out.patches.push_back(detail::nsa_patch(task.id, p, current, xj, mi, mj, rng));
        specs.push_back(out.patches.back().dest);
      }
      out.label = label_logistic_diff(xi, current, specs, *p.logistic);
      out.image = std::move(current);
      break;
    }
  }
  for (const auto& patch : out.patches) out.anomaly_centres.push_back(patch.dest.centre());
  return out;
}

/// Computes task parameters from the dataset and plan. `masks` is empty unless the
/// dataset has a uniform background, in which case it parallels `dataset`.
inline TaskParams calibrate(TaskId id, std::span<const NdImage> dataset, std::span<const ForegroundMask> masks,
                            const ExperimentPlan& plan, Rng& rng) {
  if (dataset.empty()) throw InvalidArgument("cannot calibrate on an empty dataset");
  if (!masks.empty() && masks.size() != dataset.size()) throw InvalidArgument("one mask per sample is required");
  for (const auto& m : masks)
    if (std::none_of(m.values().begin(), m.values().end(), [](std::uint8_t v) { return v != 0; }))
      throw EmptyForegroundError("calibration mask has no foreground");
  const std::size_t d = dataset.front().rank();
  if (plan.patch_size.size() != d) throw ShapeError("plan patch size rank does not match the dataset");

  TaskParams p;
  p.dataset_min = plan.dataset_min;
  std::vector<double> patch(plan.patch_size.begin(), plan.patch_size.end());
  switch (id) {
    case TaskId::fpi:
    case TaskId::pii:
      p.extent_bounds = detail::scaled_bounds(patch, 0.10, 0.40);
      p.max_anomalies = 1;
      p.alpha_range = {0.05, 0.95};
      return p;
    case TaskId::cutpaste: {
      p.extent_bounds.clear();
      for (auto e : plan.patch_size) p.extent_bounds.emplace_back(1, e);
      p.max_anomalies = 1;
      p.alpha_range = {1.0, 1.0};
      p.jitter = JitterParams{};
      p.cutpaste = CutPasteGeometry{};
      return p;
    }
    case TaskId::nsa:
    case TaskId::nsa_mixed:
      break;
  }

  std::vector<double> fg_extent;
  if (plan.foreground) {
    fg_extent = plan.foreground->avg_extent;
  } else if (!masks.empty()) {
    fg_extent = foreground_stats(masks).avg_extent;
  } else {
    fg_extent.assign(d, 0.0);
    for (const auto& img : dataset)
      for (std::size_t a = 0; a < d; ++a) fg_extent[a] += static_cast<double>(img.spatial_shape()[a]);
    for (auto& e : fg_extent) e /= static_cast<double>(dataset.size());
  }
  p.extent_bounds = detail::scaled_bounds(fg_extent, 0.05, 0.50);
  p.max_anomalies = 3;
  p.min_fg_fraction = 0.25;
  p.alpha_range = {1.0, 1.0};

  std::vector<double> diffs;
  std::size_t made = 0;
  for (std::size_t tries = 0; made < kCalibrationAnomalies && tries < 10 * kCalibrationAnomalies; ++tries) {
    const std::size_t i = rng.uniform_int(0, dataset.size() - 1);
    std::size_t j = i;
    if (dataset.size() > 1) {
      j = rng.uniform_int(0, dataset.size() - 2);
      if (j >= i) ++j;
    }
    NdImage current = dataset[i];
    const ForegroundMask* mi = masks.empty() ? nullptr : &masks[i];
    const ForegroundMask* mj = masks.empty() ? nullptr : &masks[j];
    AppliedPatch patch;
    try {
      patch = detail::nsa_patch(id, p, current, dataset[j], mi, mj, rng);
    } catch (const PlacementError&) {
      continue;
    }
    ++made;
    for_each_footprint_pixel(patch.dest, current.spatial_shape(), [&](std::size_t dst, std::size_t) {
      const double diff = detail::mean_abs_diff(current, dataset[i], dst);
      if (diff > 0.0) diffs.push_back(diff);
    });
  }
  if (made < kCalibrationAnomalies)
    throw PlacementError("only " + std::to_string(made) + " of " + std::to_string(kCalibrationAnomalies) +
                         " calibration anomalies could be placed");
  if (diffs.empty()) throw InvalidArgument("calibration anomalies produced no intensity differences");
  p.logistic = fit_logistic(percentile(std::move(diffs), 40.0));
  return p;
}

/// Maps raw scores to [0, 1]: maps already inside [0, 1] pass through, anything else
/// is squashed by the logistic function.
inline AnomalyMap score_transform(TaskId, const Grid<float>& raw) {
  for (float v : raw.values())
    if (!std::isfinite(v)) throw InvalidArgument("scores must be finite");
  const bool in_range =
      std::all_of(raw.values().begin(), raw.values().end(), [](float v) { return v >= 0.0f && v <= 1.0f; });
  if (in_range) return raw;
  AnomalyMap out(raw.shape());
  for (std::size_t i = 0; i < raw.size(); ++i)
    out[i] = std::clamp(static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(raw[i])))), 0.0f, 1.0f);
  return out;
}

}  // namespace nnoodkit
