// Builds a small textured dataset in memory, calibrates two tasks and applies them.

#include <cmath>
#include <iostream>
#include <vector>

#include "nnoodkit/imagecore.hpp"
#include "nnoodkit/metrics.hpp"
#include "nnoodkit/plan.hpp"
#include "nnoodkit/tasks.hpp"

using namespace nnoodkit;

static NdImage texture(std::size_t h, std::size_t w, double phase) {
  NdImage img(1, {h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      img(0, y * w + x) = static_cast<float>(std::sin(0.3 * x + phase) * std::cos(0.2 * y) + 0.01 * ((x * 7 + y * 13) % 11));
  return zscore_normalize(img);
}

int main() {
  std::vector<NdImage> dataset;
  for (int i = 0; i < 6; ++i) dataset.push_back(texture(64, 64, 0.5 * i));
  const ExperimentPlan plan = make_plan(dataset, {});

  Rng rng(7);
  for (TaskId id : {TaskId::fpi, TaskId::nsa}) {
    const Task task{id, calibrate(id, dataset, {}, plan, rng)};
    const AugmentedSample s = apply_task(task, dataset[0], dataset[1], nullptr, nullptr, rng);
    double peak = 0.0;
    std::size_t marked = 0;
    for (float v : s.label.values()) {
      peak = std::max(peak, static_cast<double>(v));
      marked += v > 0.0f;
    }
    std::cout << to_string(id) << ": " << s.patches.size() << " patch(es), " << marked << " labelled pixels, peak "
              << peak << "\n";
  }

  const std::vector<double> scores{0.9, 0.8, 0.3, 0.1};
  const std::vector<int> labels{1, 0, 1, 0};
  std::cout << "auroc " << auroc(scores, labels) << "  ap " << average_precision(scores, labels) << "\n";
}
