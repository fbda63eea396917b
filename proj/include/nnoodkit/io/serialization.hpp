#pragma once

// JSON documents: dataset.json, plan.json, task_params.json, metrics.json, sample
// sidecars and bounding-box ground truth.

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "nnoodkit/errors.hpp"
#include "nnoodkit/metrics.hpp"
#include "nnoodkit/plan.hpp"
#include "nnoodkit/tasks.hpp"

namespace nnoodkit::io {

using json = nlohmann::json;

namespace detail {

template <typename T>
T required(const json& j, const char* key) {
  if (!j.contains(key)) throw InvalidArgument(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("field '") + key + "': " + e.what());
  }
}

inline json range_json(const Range& r) { return json::array({r.lo, r.hi}); }
inline Range range_from(const json& j) {
  if (!j.is_array() || j.size() != 2) throw InvalidArgument("range must be a [lo, hi] pair");
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace detail

// -- dataset.json -------------------------------------------------------------

inline AugmentationKind parse_augmentation(const std::string& name) {
  if (name == "flip") return AugmentationKind::flip;
  if (name == "rotate90") return AugmentationKind::rotate90;
  if (name == "rotate") return AugmentationKind::rotate;
  if (name == "scale") return AugmentationKind::scale;
  if (name == "gamma") return AugmentationKind::gamma;
  if (name == "noise") return AugmentationKind::noise;
  throw InvalidArgument("unknown augmentation '" + name + "'");
}

inline std::string to_string(AugmentationKind kind) {
  switch (kind) {
    case AugmentationKind::flip: return "flip";
    case AugmentationKind::rotate90: return "rotate90";
    case AugmentationKind::rotate: return "rotate";
    case AugmentationKind::scale: return "scale";
    case AugmentationKind::gamma: return "gamma";
    case AugmentationKind::noise: return "noise";
  }
  return "unknown";
}

inline DatasetDescriptor descriptor_from_json(const json& j) {
  DatasetDescriptor d;
  d.name = detail::required<std::string>(j, "name");
  d.spatial_rank = detail::required<std::size_t>(j, "spatial_rank");
  d.channels = detail::required<std::size_t>(j, "channels");
  d.uniform_background = detail::required<bool>(j, "uniform_background");
  const auto fmt = detail::required<std::string>(j, "file_format");
  if (fmt == "png2d") d.file_format = FileFormat::png2d;
  else if (fmt == "nifti") d.file_format = FileFormat::nifti;
  else throw InvalidArgument("file_format must be 'png2d' or 'nifti'");
  if (j.contains("safe_augmentations")) {
    for (const auto& a : j.at("safe_augmentations")) {
      SafeAugmentation aug;
      aug.kind = parse_augmentation(detail::required<std::string>(a, "type"));
      if (a.contains("axis")) aug.axes.push_back(a.at("axis").get<std::size_t>());
      if (a.contains("axes")) aug.axes = a.at("axes").get<std::vector<std::size_t>>();
      if (a.contains("range")) {
        const Range r = detail::range_from(a.at("range"));
        aug.range = std::make_pair(r.lo, r.hi);
      }
      d.safe_augmentations.push_back(std::move(aug));
    }
  }
  validate(d);
  return d;
}

inline json to_json(const DatasetDescriptor& d) {
  json augs = json::array();
  for (const auto& a : d.safe_augmentations) {
    json e{{"type", to_string(a.kind)}};
    if (a.kind == AugmentationKind::flip) e["axis"] = a.axes.at(0);
    else if (!a.axes.empty()) e["axes"] = a.axes;
    if (a.range) e["range"] = json::array({a.range->first, a.range->second});
    augs.push_back(std::move(e));
  }
  return {{"name", d.name},
          {"spatial_rank", d.spatial_rank},
          {"channels", d.channels},
          {"uniform_background", d.uniform_background},
          {"safe_augmentations", augs},
          {"file_format", d.file_format == FileFormat::png2d ? "png2d" : "nifti"}};
}

// -- plan.json ----------------------------------------------------------------

inline json to_json(const ExperimentPlan& p) {
  json j{{"patch_size", p.patch_size},
         {"median_shape", p.median_shape},
         {"dataset_min", p.dataset_min},
         {"normalisation", p.normalisation},
         {"sample_count", p.sample_count},
         {"foreground", nullptr}};
  if (p.foreground) j["foreground"] = {{"avg_extent", p.foreground->avg_extent}, {"avg_area", p.foreground->avg_area}};
  return j;
}

inline ExperimentPlan plan_from_json(const json& j) {
  ExperimentPlan p;
  p.patch_size = detail::required<Shape>(j, "patch_size");
  p.median_shape = j.value("median_shape", p.patch_size);
  p.dataset_min = detail::required<double>(j, "dataset_min");
  p.normalisation = j.value("normalisation", std::string("zscore"));
  if (p.normalisation != "zscore") throw InvalidArgument("only zscore normalisation is supported");
  p.sample_count = detail::required<std::size_t>(j, "sample_count");
  if (j.contains("foreground") && !j.at("foreground").is_null()) {
    const json& f = j.at("foreground");
    p.foreground = ForegroundStats{detail::required<std::vector<double>>(f, "avg_extent"),
                                   detail::required<double>(f, "avg_area")};
  }
  return p;
}

// -- task_params.json ---------------------------------------------------------

inline json to_json(const LogisticFit& f) { return {{"k", f.k}, {"d0", f.d0}, {"q40", f.q40}}; }

inline json task_to_json(const Task& task) {
  const TaskParams& p = task.params;
  json bounds = json::array();
  for (const auto& [lo, hi] : p.extent_bounds) bounds.push_back(json::array({lo, hi}));
  json j{{"task", std::string(to_string(task.id))},
         {"extent_bounds", bounds},
         {"max_anomalies", p.max_anomalies},
         {"min_fg_fraction", p.min_fg_fraction},
         {"alpha_range", detail::range_json(p.alpha_range)},
         {"dataset_min", p.dataset_min}};
  if (p.logistic) j["logistic"] = to_json(*p.logistic);
  if (p.jitter)
    j["jitter"] = {{"brightness_range", detail::range_json(p.jitter->brightness)},
                   {"contrast_range", detail::range_json(p.jitter->contrast)},
                   {"rotate_range", detail::range_json(p.jitter->rotate_degrees)},
                   {"rotate_probability", p.jitter->rotate_probability},
                   {"jitter_probability", p.jitter->jitter_probability}};
  if (p.cutpaste)
    j["cutpaste"] = {{"area_ratio", detail::range_json(p.cutpaste->area_ratio)},
                     {"aspect_ratio", detail::range_json(p.cutpaste->aspect_ratio)}};
  return j;
}

inline Task task_from_json(const json& j) {
  Task task;
  task.id = parse_task(detail::required<std::string>(j, "task"));
  TaskParams& p = task.params;
  for (const auto& b : detail::required<json>(j, "extent_bounds"))
    p.extent_bounds.emplace_back(b.at(0).get<std::size_t>(), b.at(1).get<std::size_t>());
  p.max_anomalies = detail::required<std::size_t>(j, "max_anomalies");
  p.min_fg_fraction = detail::required<double>(j, "min_fg_fraction");
  p.alpha_range = detail::range_from(detail::required<json>(j, "alpha_range"));
  p.dataset_min = detail::required<double>(j, "dataset_min");
  if (j.contains("logistic")) {
    const json& l = j.at("logistic");
    p.logistic = LogisticFit{detail::required<double>(l, "k"), detail::required<double>(l, "d0"),
                             detail::required<double>(l, "q40")};
  }
  if (j.contains("jitter")) {
    const json& l = j.at("jitter");
    JitterParams jp;
    jp.brightness = detail::range_from(l.at("brightness_range"));
    jp.contrast = detail::range_from(l.at("contrast_range"));
    jp.rotate_degrees = detail::range_from(l.at("rotate_range"));
    jp.rotate_probability = l.value("rotate_probability", jp.rotate_probability);
    jp.jitter_probability = l.value("jitter_probability", jp.jitter_probability);
    p.jitter = jp;
  }
  if (j.contains("cutpaste")) {
    const json& l = j.at("cutpaste");
    p.cutpaste = CutPasteGeometry{detail::range_from(l.at("area_ratio")), detail::range_from(l.at("aspect_ratio"))};
  }
  validate(task.id, p);
  return task;
}

// -- metrics.json -------------------------------------------------------------

inline json to_json(const MetricReport& r) {
  return {{"auroc", r.auroc},
          {"ap", r.ap},
          {"prevalence", r.prevalence},
          {"random_baseline_ap", r.prevalence},
          {"n_positive", r.n_positive},
          {"n_negative", r.n_negative}};
}

// -- sidecars -----------------------------------------------------------------

inline json to_json(const PatchTransform& t) {
  return std::visit(
      [](const auto& v) -> json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Resize>) return {{"kind", "resize"}, {"scale", v.scale}};
        else if constexpr (std::is_same_v<T, Rotate>)
          return {{"kind", "rotate"}, {"degrees", v.degrees}, {"plane", json::array({v.axis0, v.axis1})}};
        else if constexpr (std::is_same_v<T, Flip>) return {{"kind", "flip"}, {"axis", v.axis}};
        else if constexpr (std::is_same_v<T, Brightness>) return {{"kind", "brightness"}, {"factor", v.factor}};
        else return {{"kind", "contrast"}, {"factor", v.factor}};
      },
      t);
}

inline json to_json(const AppliedPatch& p) {
  json transforms = json::array();
  for (const auto& t : p.transforms) transforms.push_back(to_json(t));
  return {{"source_origin", p.source_origin},
          {"source_extent", p.source_extent},
          {"origin", p.dest.origin},
          {"extent", p.dest.extent},
          {"footprint_pixels", p.dest.footprint_pixels()},
          {"alpha", p.alpha},
          {"transforms", transforms}};
}

// -- bounding-box ground truth -------------------------------------------------

inline std::vector<Box> boxes_from_json(const json& j) {
  if (!j.is_array()) throw InvalidArgument("bounding-box file must hold a list of boxes");
  std::vector<Box> boxes;
  for (const auto& b : j)
    boxes.push_back({detail::required<Coord>(b, "origin"), detail::required<Shape>(b, "extent")});
  return boxes;
}

}  // namespace nnoodkit::io
