#pragma once

// Implementations behind the nnoodkit command-line subcommands.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "nnoodkit/imagecore.hpp"
#include "nnoodkit/io/atomic_file.hpp"
#include "nnoodkit/io/image_io.hpp"
#include "nnoodkit/io/serialization.hpp"
#include "nnoodkit/metrics.hpp"
#include "nnoodkit/plan.hpp"
#include "nnoodkit/rng.hpp"
#include "nnoodkit/tasks.hpp"

namespace nnoodkit::cli {

namespace fs = std::filesystem;
using io::json;

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline json read_json(const fs::path& path) {
  const std::string text = io::read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

/// Training images of a dataset directory, z-score normalised, with foreground
/// masks when the descriptor declares a uniform background.
struct TrainingSet {
  DatasetDescriptor descriptor;
  std::vector<fs::path> files;
  std::vector<NdImage> images;
  std::vector<ForegroundMask> masks;

  const ForegroundMask* mask(std::size_t i) const { return masks.empty() ? nullptr : &masks[i]; }
};

inline TrainingSet load_training_set(const fs::path& dataset_dir) {
  TrainingSet set;
  set.descriptor = io::descriptor_from_json(read_json(dataset_dir / "dataset.json"));
  set.files = io::list_images(dataset_dir / "imagesTr");
  if (set.files.empty()) throw InvalidArgument("no training images in " + (dataset_dir / "imagesTr").string());
  for (const auto& f : set.files) {
    NdImage img = io::load_image(f);
    validate(img);
    if (img.rank() != set.descriptor.spatial_rank || img.channels() != set.descriptor.channels)
      throw ShapeError(f.string() + ": expected rank " + std::to_string(set.descriptor.spatial_rank) + " with " +
                       std::to_string(set.descriptor.channels) + " channel(s), got rank " +
                       std::to_string(img.rank()) + " with " + std::to_string(img.channels()));
    set.images.push_back(zscore_normalize(img));
    if (set.descriptor.uniform_background) {
      try {
        set.masks.push_back(foreground_mask(set.images.back()));
      } catch (const EmptyForegroundError& e) {
        throw EmptyForegroundError(f.string() + ": " + e.what());
      }
    }
  }
  return set;
}

inline std::size_t default_jobs() {
  if (const char* env = std::getenv("NNOODKIT_JOBS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
  }
  return 1;
}

/// Runs fn(k) for k in [0, count) on `jobs` threads; fn must only touch per-k state.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t jobs, Fn&& fn) {
  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(count, 1));
  if (jobs == 1) {
    for (std::size_t k = 0; k < count; ++k) fn(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> workers;
    for (std::size_t t = 0; t < jobs; ++t)
      workers.emplace_back([&] {
        for (std::size_t k = next++; k < count; k = next++) {
          try {
            fn(k);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
  }
  if (failure) std::rethrow_exception(failure);
}

// -- plan ---------------------------------------------------------------------

inline ExperimentPlan cmd_plan(const fs::path& dataset_dir, const fs::path& out) {
  const TrainingSet set = load_training_set(dataset_dir);
  const ExperimentPlan plan = make_plan(set.images, set.masks);
  io::write_file_atomic(out, dump(io::to_json(plan)));
  return plan;
}

// -- calibrate ----------------------------------------------------------------

inline Task load_task(const fs::path& params) { return io::task_from_json(read_json(params)); }

inline Task cmd_calibrate(const fs::path& dataset_dir, TaskId id, const fs::path& plan_path, std::uint64_t seed,
                          const fs::path& out) {
  const TrainingSet set = load_training_set(dataset_dir);
  const ExperimentPlan plan = io::plan_from_json(read_json(plan_path));
  Rng rng(seed);
  Task task{id, calibrate(id, set.images, set.masks, plan, rng)};
  json j = io::task_to_json(task);
  j["seed"] = seed;
  io::write_file_atomic(out, dump(j));
  return task;
}

// -- generate -----------------------------------------------------------------

/// Per-sample random draws: which samples pair up, and the seed of the task generator.
struct SampleDraw {
  std::size_t index = 0;
  std::uint64_t sample_seed = 0;
  std::uint64_t task_seed = 0;
  std::size_t xi = 0;
  std::size_t xj = 0;
};

inline SampleDraw draw_sample(std::uint64_t base_seed, std::size_t index, std::size_t dataset_size) {
  SampleDraw d;
  d.index = index;
  d.sample_seed = sample_seed(base_seed, index);
  d.task_seed = mix64(d.sample_seed ^ 0x7461736bULL);
  Rng pick(mix64(d.sample_seed));
  d.xi = pick.uniform_int(0, dataset_size - 1);
  d.xj = d.xi;
  if (dataset_size > 1) {
    d.xj = pick.uniform_int(0, dataset_size - 2);
    if (d.xj >= d.xi) ++d.xj;
  }
  return d;
}

/// Generates one sample exactly as `generate` does; the task generator is seeded with
/// draw.task_seed only, so a sidecar is enough to replay it.
inline AugmentedSample generate_sample(const TrainingSet& set, const Task& task, const SampleDraw& draw) {
  Rng rng(draw.task_seed);
  return apply_task(task, set.images[draw.xi], set.images[draw.xj], set.mask(draw.xi), set.mask(draw.xj), rng);
}

inline std::string sample_name(std::size_t index) {
  std::string digits = std::to_string(index);
  return "sample_" + std::string(digits.size() < 5 ? 5 - digits.size() : 0, '0') + digits;
}

inline NdImage label_image(const AnomalyMap& label) { return NdImage(1, label.shape(), label.data()); }

struct GenerateReport {
  std::size_t requested = 0;
  std::size_t written = 0;
  std::vector<std::pair<std::size_t, std::string>> failures;
};

inline json sidecar_json(const TrainingSet& set, const Task& task, std::uint64_t base_seed, const SampleDraw& draw) {
  return {{"task", std::string(to_string(task.id))},
          {"base_seed", base_seed},
          {"sample_index", draw.index},
          {"sample_seed", draw.sample_seed},
          {"task_seed", draw.task_seed},
          {"x_i", set.files[draw.xi].filename().string()},
          {"x_j", set.files[draw.xj].filename().string()},
          {"x_i_index", draw.xi},
          {"x_j_index", draw.xj}};
}

inline GenerateReport cmd_generate(const fs::path& dataset_dir, const fs::path& params_path, std::size_t count,
                                   std::uint64_t seed, const fs::path& out_dir, std::size_t jobs,
                                   std::optional<TaskId> expected_task = std::nullopt) {
  if (count < 1) throw InvalidArgument("count must be at least 1");
  const Task task = load_task(params_path);
  if (expected_task && *expected_task != task.id)
    throw InvalidArgument("--task does not match the task stored in " + params_path.string());
  const TrainingSet set = load_training_set(dataset_dir);
  fs::create_directories(out_dir / "images");
  fs::create_directories(out_dir / "labels");
  fs::create_directories(out_dir / "sidecars");

  std::vector<std::optional<std::string>> errors(count);
  parallel_for(count, jobs, [&](std::size_t k) {
    const SampleDraw draw = draw_sample(seed, k, set.images.size());
    json side = sidecar_json(set, task, seed, draw);
    const std::string name = sample_name(k);
    try {
      const AugmentedSample sample = generate_sample(set, task, draw);
      json patches = json::array();
      for (const auto& p : sample.patches) patches.push_back(io::to_json(p));
      side["patches"] = patches;
      side["anomaly_centres"] = sample.anomaly_centres;
      side["image"] = "images/" + name + ".nii";
      side["label"] = "labels/" + name + ".nii";
      io::write_nifti(out_dir / "images" / (name + ".nii"), sample.image);
      io::write_nifti(out_dir / "labels" / (name + ".nii"), label_image(sample.label));
    } catch (const PlacementError& e) {
      side["error"] = e.what();
      errors[k] = e.what();
    }
    io::write_file_atomic(out_dir / "sidecars" / (name + ".json"), dump(side));
  });

  GenerateReport report;
  report.requested = count;
  json failures = json::array();
  for (std::size_t k = 0; k < count; ++k) {
    if (errors[k]) {
      report.failures.emplace_back(k, *errors[k]);
      failures.push_back({{"sample_index", k}, {"error", *errors[k]}});
    } else {
      ++report.written;
    }
  }
  io::write_file_atomic(out_dir / "summary.json",
                        dump({{"task", std::string(to_string(task.id))},
                              {"base_seed", seed},
                              {"requested", count},
                              {"written", report.written},
                              {"failures", failures}}));
  return report;
}

// -- evaluate -----------------------------------------------------------------

inline std::optional<fs::path> find_by_stem(const fs::path& dir, const std::string& stem) {
  for (const char* ext : {".nii.gz", ".nii", ".png"}) {
    fs::path candidate = dir / (stem + ext);
    if (fs::exists(candidate)) return candidate;
  }
  return std::nullopt;
}

inline Grid<float> load_scores(const fs::path& path) {
  const NdImage img = io::load_image(path);
  if (img.channels() != 1) throw ShapeError(path.string() + ": prediction maps must be single-channel");
  return Grid<float>(img.spatial_shape(), img.data());
}

/// Ground truth from a mask image (nonzero = anomalous) or a bounding-box JSON list.
inline Grid<std::uint8_t> load_truth(const fs::path& path, const Shape& shape) {
  if (io::ends_with(path.filename().string(), ".json")) {
    const auto boxes = io::boxes_from_json(read_json(path));
    return rasterize_boxes(boxes, shape);
  }
  const NdImage img = io::load_image(path);
  if (img.spatial_shape() != shape) throw ShapeError(path.string() + ": mask shape does not match prediction");
  Grid<std::uint8_t> mask(shape, 0);
  for (std::size_t p = 0; p < mask.size(); ++p)
    for (std::size_t c = 0; c < img.channels(); ++c)
      if (img(c, p) != 0.0f) mask[p] = 1;
  return mask;
}

inline MetricReport cmd_evaluate(const fs::path& pred_dir, const fs::path& gt_dir, const fs::path& out) {
  if (!fs::is_directory(gt_dir)) throw IoError(gt_dir.string() + " is not a directory");
  std::vector<fs::path> truth_files;
  for (const auto& e : fs::directory_iterator(gt_dir))
    if (e.is_regular_file() && (io::is_image_file(e.path()) || e.path().extension() == ".json"))
      truth_files.push_back(e.path());
  std::sort(truth_files.begin(), truth_files.end());
  if (truth_files.empty()) throw InvalidArgument("no ground-truth files in " + gt_dir.string());

  std::vector<AnomalyMap> preds;
  std::vector<Grid<std::uint8_t>> truths;
  std::vector<std::string> seen;
  for (const auto& t : truth_files) {
    const std::string stem = io::image_stem(t);
    if (std::find(seen.begin(), seen.end(), stem) != seen.end())
      throw InvalidArgument("duplicate ground truth for '" + stem + "'");
    seen.push_back(stem);
    const auto pred = find_by_stem(pred_dir, stem);
    if (!pred) throw InvalidArgument("no prediction for ground truth '" + stem + "' in " + pred_dir.string());
    preds.push_back(load_scores(*pred));
    truths.push_back(load_truth(t, preds.back().shape()));
  }
  for (const auto& p : io::list_images(pred_dir))
    if (std::find(seen.begin(), seen.end(), io::image_stem(p)) == seen.end())
      throw InvalidArgument("prediction '" + p.filename().string() + "' has no ground truth");
  const MetricReport report = evaluate_dataset(preds, truths);
  io::write_file_atomic(out, dump(io::to_json(report)));
  return report;
}

// -- inspect ------------------------------------------------------------------

/// 2D view of a sample: the image itself, or the axis-0 slice through `slice_at`.
inline std::pair<NdImage, AnomalyMap> display_slice(const NdImage& img, const AnomalyMap& label, std::size_t slice) {
  if (img.rank() == 2) return {img, label};
  if (img.rank() != 3) throw UnsupportedRankError("inspect panels need 2D or 3D images");
  const Shape& s = img.spatial_shape();
  const Shape plane{s[1], s[2]};
  NdImage out_img(img.channels(), plane);
  AnomalyMap out_label(plane);
  const std::size_t px = s[1] * s[2];
  for (std::size_t p = 0; p < px; ++p) {
    for (std::size_t c = 0; c < img.channels(); ++c) out_img(c, p) = img(c, slice * px + p);
    out_label[p] = label[slice * px + p];
  }
  return {out_img, out_label};
}

/// Original | augmented | label heat overlay, as interleaved 8-bit RGB. Intensity
/// panels share one min-max scaling; the overlay's red channel is nonzero exactly
/// where the label is.
inline std::vector<std::uint8_t> render_panel(const NdImage& original, const NdImage& augmented,
                                              const AnomalyMap& label) {
  const std::size_t h = original.spatial_shape()[0], w = original.spatial_shape()[1];
  auto mean_at = [](const NdImage& img, std::size_t p) {
    double v = 0.0;
    for (std::size_t c = 0; c < img.channels(); ++c) v += img(c, p);
    return v / static_cast<double>(img.channels());
  };
  double lo = mean_at(original, 0), hi = lo;
  for (std::size_t p = 0; p < h * w; ++p)
    for (const NdImage* img : {&original, &augmented}) {
      lo = std::min(lo, mean_at(*img, p));
      hi = std::max(hi, mean_at(*img, p));
    }
  auto gray = [&](double v) {
    if (!(hi > lo)) return std::uint8_t{0};
    return static_cast<std::uint8_t>(std::lround(255.0 * (v - lo) / (hi - lo)));
  };
  std::vector<std::uint8_t> rgb(h * 3 * w * 3, 0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t p = y * w + x;
      const std::uint8_t g0 = gray(mean_at(original, p));
      const std::uint8_t g1 = gray(mean_at(augmented, p));
      const double l = std::clamp(static_cast<double>(label[p]), 0.0, 1.0);
      const auto red = static_cast<std::uint8_t>(l > 0.0 ? std::max(1.0, std::ceil(255.0 * l)) : 0.0);
      const std::uint8_t dim = static_cast<std::uint8_t>(g1 / 2);
      const std::uint8_t panel[3][3] = {{g0, g0, g0}, {g1, g1, g1}, {red, dim, dim}};
      for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t c = 0; c < 3; ++c) rgb[(y * 3 * w + k * w + x) * 3 + c] = panel[k][c];
    }
  }
  return rgb;
}

inline std::size_t cmd_inspect(const fs::path& dataset_dir, const fs::path& params_path, std::size_t n,
                               std::uint64_t seed, const fs::path& out_dir, std::size_t jobs,
                               std::optional<TaskId> expected_task = std::nullopt) {
  if (n < 1) throw InvalidArgument("n must be at least 1");
  const Task task = load_task(params_path);
  if (expected_task && *expected_task != task.id)
    throw InvalidArgument("--task does not match the task stored in " + params_path.string());
  const TrainingSet set = load_training_set(dataset_dir);
  if (set.descriptor.spatial_rank < 2) throw UnsupportedRankError("inspect panels need 2D or 3D images");
  fs::create_directories(out_dir);
  parallel_for(n, jobs, [&](std::size_t k) {
    const SampleDraw draw = draw_sample(seed, k, set.images.size());
    const AugmentedSample sample = generate_sample(set, task, draw);
    const std::size_t slice = sample.anomaly_centres.empty() ? 0 : sample.anomaly_centres.front()[0];
    const NdImage& original = set.images[draw.xi];
    const auto [orig2d, label2d] = display_slice(original, sample.label, original.rank() == 3 ? slice : 0);
    const auto [aug2d, unused] = display_slice(sample.image, sample.label, original.rank() == 3 ? slice : 0);
    const std::size_t h = orig2d.spatial_shape()[0], w = orig2d.spatial_shape()[1];
    io::write_png8(out_dir / ("panel_" + sample_name(k).substr(7) + ".png"), h, 3 * w, 3,
                   render_panel(orig2d, aug2d, label2d));
  });
  return n;
}

}  // namespace nnoodkit::cli
