#pragma once

// Pixel-wise ranking metrics for anomaly maps.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <ranges>
#include <span>
#include <utility>
#include <vector>

#include "nnoodkit/errors.hpp"
#include "nnoodkit/ndimage.hpp"

namespace nnoodkit {

namespace detail {

template <typename Scores, typename Labels>
std::pair<std::size_t, std::size_t> class_counts(const Scores& scores, const Labels& labels) {
  if (std::ranges::size(scores) != std::ranges::size(labels))
    throw ShapeError("scores and labels differ in length");
  std::size_t pos = 0;
  for (const auto& l : labels) pos += l ? 1 : 0;
  const std::size_t neg = std::ranges::size(labels) - pos;
  if (pos == 0 || neg == 0) throw UndefinedMetricError("metric is undefined when only one class is present");
  return {pos, neg};
}

template <typename Scores>
std::vector<std::size_t> order_by_score(const Scores& scores, bool descending) {
  std::vector<std::size_t> order(std::ranges::size(scores));
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto it = std::ranges::begin(scores);
  if (descending)
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return it[a] > it[b]; });
  else
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return it[a] < it[b]; });
  return order;
}

}  // namespace detail

/// Probability that a random positive outscores a random negative, ties counted half.
template <std::ranges::random_access_range Scores, std::ranges::random_access_range Labels>
double auroc(const Scores& scores, const Labels& labels) {
  const auto [pos, neg] = detail::class_counts(scores, labels);
  const auto order = detail::order_by_score(scores, false);
  auto s = std::ranges::begin(scores);
  auto l = std::ranges::begin(labels);
  // Twice the Mann-Whitney count, kept integral.
  unsigned __int128 twice_u = 0;
  std::size_t neg_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::size_t group_pos = 0, group_neg = 0;
    while (j < order.size() && s[order[j]] == s[order[i]]) {
      (l[order[j]] ? group_pos : group_neg)++;
      ++j;
    }
    twice_u += static_cast<unsigned __int128>(group_pos) * (2 * neg_below + group_neg);
    neg_below += group_neg;
    i = j;
  }
  const long double denom = 2.0L * static_cast<long double>(pos) * static_cast<long double>(neg);
  return static_cast<double>(static_cast<long double>(twice_u) / denom);
}

/// Step-wise average precision: sum over descending distinct thresholds of
/// (R_n - R_{n-1}) P_n, tied scores sharing one threshold.
template <std::ranges::random_access_range Scores, std::ranges::random_access_range Labels>
double average_precision(const Scores& scores, const Labels& labels) {
  const auto [pos, neg] = detail::class_counts(scores, labels);
  const auto order = detail::order_by_score(scores, true);
  auto s = std::ranges::begin(scores);
  auto l = std::ranges::begin(labels);
  std::size_t tp = 0, fp = 0;
  double prev_recall = 0.0;
  double ap = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && s[order[j]] == s[order[i]]) {
      (l[order[j]] ? tp : fp)++;
      ++j;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

struct MetricReport {
  double auroc = 0.0;
  double ap = 0.0;
  double prevalence = 0.0;
  std::size_t n_positive = 0;
  std::size_t n_negative = 0;

  bool operator==(const MetricReport&) const = default;
};

/// Pools every pixel of every sample into one ranking problem.
inline MetricReport evaluate_dataset(std::span<const AnomalyMap> predictions, std::span<const Grid<std::uint8_t>> truth) {
  if (predictions.size() != truth.size()) throw ShapeError("prediction and ground-truth counts differ");
  std::vector<float> scores;
  std::vector<std::uint8_t> labels;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].shape() != truth[i].shape())
      throw ShapeError("sample " + std::to_string(i) + ": prediction shape " + to_string(predictions[i].shape()) +
                       " does not match ground truth " + to_string(truth[i].shape()));
    scores.insert(scores.end(), predictions[i].values().begin(), predictions[i].values().end());
    for (auto v : truth[i].values()) labels.push_back(v ? 1 : 0);
  }
  MetricReport report;
  const auto [pos, neg] = detail::class_counts(scores, labels);
  report.n_positive = pos;
  report.n_negative = neg;
  report.prevalence = static_cast<double>(pos) / static_cast<double>(pos + neg);
  report.auroc = auroc(scores, labels);
  report.ap = average_precision(scores, labels);
  return report;
}

/// Axis-aligned box in pixel coordinates.
struct Box {
  Coord origin;
  Shape extent;
};

/// Rasterises boxes to a filled binary mask; boxes are clipped to the image.
inline Grid<std::uint8_t> rasterize_boxes(std::span<const Box> boxes, const Shape& shape) {
  Grid<std::uint8_t> mask(shape, 0);
  for (const auto& box : boxes) {
    if (box.origin.size() != shape.size() || box.extent.size() != shape.size())
      throw ShapeError("bounding box rank does not match image rank");
    Coord lo(shape.size());
    Shape ext(shape.size());
    bool empty = false;
    for (std::size_t a = 0; a < shape.size(); ++a) {
      lo[a] = std::min(box.origin[a], shape[a]);
      const std::size_t hi = std::min(box.origin[a] + box.extent[a], shape[a]);
      ext[a] = hi - lo[a];
      empty = empty || ext[a] == 0;
    }
    if (empty) continue;
    Coord p(shape.size());
    for_each_coord(ext, [&](const Coord& c) {
      for (std::size_t a = 0; a < c.size(); ++a) p[a] = lo[a] + c[a];
      mask.at(p) = 1;
    });
  }
  return mask;
}

/// Exponential moving average of validation AP with a stopping threshold.
struct StopState {
  double ema = 0.0;
  double threshold = 0.875;
  double decay = 0.9;
  bool initialized = false;
};

inline std::pair<StopState, bool> update_stop(StopState state, double ap) {
  if (!(ap >= 0.0 && ap <= 1.0)) throw InvalidArgument("average precision must lie in [0, 1]");
  state.ema = state.initialized ? state.decay * state.ema + (1.0 - state.decay) * ap : ap;
  state.initialized = true;
  return {state, state.ema >= state.threshold};
}

}  // namespace nnoodkit
