#pragma once

#include <algorithm>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nnoodkit/errors.hpp"
#include "nnoodkit/imagecore.hpp"
#include "nnoodkit/ndimage.hpp"

namespace nnoodkit {

enum class FileFormat { png2d, nifti };

enum class AugmentationKind { flip, rotate90, rotate, scale, gamma, noise };

/// One augmentation the dataset owner declared safe, i.e. it keeps samples normal.
struct SafeAugmentation {
  AugmentationKind kind = AugmentationKind::flip;
  std::vector<std::size_t> axes;  // flip: one axis; rotate90: the two plane axes
  std::optional<std::pair<double, double>> range;  // rotate, scale, gamma, noise

  bool operator==(const SafeAugmentation&) const = default;
};

struct DatasetDescriptor {
  std::string name;
  std::size_t spatial_rank = 2;
  std::size_t channels = 1;
  bool uniform_background = false;
  std::vector<SafeAugmentation> safe_augmentations;
  FileFormat file_format = FileFormat::png2d;

  bool operator==(const DatasetDescriptor&) const = default;
};

inline void validate(const DatasetDescriptor& desc) {
  if (desc.spatial_rank < 1 || desc.spatial_rank > 3) throw InvalidArgument("spatial_rank must be 1, 2 or 3");
  if (desc.channels < 1) throw InvalidArgument("channels must be at least 1");
  if (desc.file_format == FileFormat::png2d && desc.spatial_rank != 2)
    throw InvalidArgument("png2d datasets must have spatial_rank 2");
  for (const auto& aug : desc.safe_augmentations) {
    for (auto axis : aug.axes)
      if (axis >= desc.spatial_rank) throw InvalidArgument("augmentation axis out of range");
    switch (aug.kind) {
      case AugmentationKind::flip:
        if (aug.axes.size() != 1) throw InvalidArgument("flip takes exactly one axis");
        break;
      case AugmentationKind::rotate90:
        if (aug.axes.size() != 2 || aug.axes[0] == aug.axes[1]) throw InvalidArgument("rotate90 takes two distinct axes");
        break;
      default:
        if (!aug.range || aug.range->first > aug.range->second)
          throw InvalidArgument("augmentation needs a (lo, hi) range");
    }
  }
}

/// Dataset-derived parameters shared by calibration and generation.
struct ExperimentPlan {
  Shape patch_size;
  Shape median_shape;
  double dataset_min = 0.0;
  std::optional<ForegroundStats> foreground;
  std::string normalisation = "zscore";
  std::size_t sample_count = 0;

  bool operator==(const ExperimentPlan&) const = default;
};

/// Per-axis median of the sample extents (mean of the middle pair, rounded down).
inline Shape median_shape(std::span<const Shape> shapes) {
  if (shapes.empty()) throw InvalidArgument("no shapes to take the median of");
  const std::size_t d = shapes.front().size();
  Shape out(d);
  for (std::size_t a = 0; a < d; ++a) {
    std::vector<std::size_t> ext;
    for (const auto& s : shapes) {
      if (s.size() != d) throw ShapeError("samples differ in spatial rank");
      ext.push_back(s[a]);
    }
    std::sort(ext.begin(), ext.end());
    const std::size_t n = ext.size();
    out[a] = n % 2 ? ext[n / 2] : (ext[n / 2 - 1] + ext[n / 2]) / 2;
  }
  return out;
}

/// min(median, cap) rounded down to a multiple of 16 with a floor of 32; axes shorter
/// than 32 keep their full extent. Cap is 96 for volumes and 256 otherwise.
inline Shape plan_patch_size(const Shape& median) {
  const std::size_t cap = median.size() == 3 ? 96 : 256;
  Shape out(median.size());
  for (std::size_t a = 0; a < median.size(); ++a) {
    if (median[a] < 32) {
      out[a] = median[a];
      continue;
    }
    out[a] = std::max<std::size_t>(32, std::min(median[a], cap) / 16 * 16);
  }
  return out;
}

/// Builds the plan from normalised samples; masks are given only for uniform-background data.
inline ExperimentPlan make_plan(std::span<const NdImage> normalised, std::span<const ForegroundMask> masks) {
  if (normalised.empty()) throw InvalidArgument("cannot plan an empty dataset");
  std::vector<Shape> shapes;
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& img : normalised) {
    shapes.push_back(img.spatial_shape());
    for (float v : img.values()) lo = std::min(lo, static_cast<double>(v));
  }
  ExperimentPlan plan;
  plan.median_shape = median_shape(shapes);
  plan.patch_size = plan_patch_size(plan.median_shape);
  plan.dataset_min = lo;
  plan.sample_count = normalised.size();
  if (!masks.empty()) plan.foreground = foreground_stats(masks);
  return plan;
}

}  // namespace nnoodkit
