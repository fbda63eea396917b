#pragma once

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "nnoodkit/io/nifti.hpp"
#include "nnoodkit/io/png.hpp"
#include "nnoodkit/io/serialization.hpp"
#include "nnoodkit/ndimage.hpp"

namespace fixtures {

using namespace nnoodkit;
namespace fs = std::filesystem;

/// Smooth periodic texture plus seeded noise; never constant.
inline NdImage texture(const Shape& shape, std::size_t channels, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double f0 = 0.15 + 0.2 * u(gen), f1 = 0.1 + 0.2 * u(gen), phase = 6.0 * u(gen);
  NdImage img(channels, shape);
  const auto strides = strides_of(shape);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t p = 0; p < img.pixels(); ++p) {
      double v = phase + static_cast<double>(c);
      for (std::size_t a = 0; a < shape.size(); ++a) {
        const double i = static_cast<double>((p / strides[a]) % shape[a]);
        v += (a % 2 ? f1 : f0) * i;
      }
      img(c, p) = static_cast<float>(std::sin(v) + 0.5 * std::cos(0.7 * v) + 0.2 * u(gen));
    }
  return img;
}

inline NdImage random_image(const Shape& shape, std::size_t channels, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  NdImage img(channels, shape);
  for (auto& v : img.values()) v = n(gen);
  return img;
}

/// Image whose pixels repeat with `period` along every axis.
inline NdImage periodic(const Shape& shape, std::size_t period, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  Shape tile(shape.size(), period);
  std::vector<float> cell(numel(tile));
  for (auto& v : cell) v = u(gen);
  NdImage img(1, shape);
  const auto tile_strides = strides_of(tile);
  std::size_t k = 0;
  for_each_coord(shape, [&](const Coord& c) {
    std::size_t off = 0;
    for (std::size_t a = 0; a < c.size(); ++a) off += (c[a] % period) * tile_strides[a];
    img(0, k++) = cell[off];
  });
  return img;
}

/// Constant background with one filled shape of textured intensity; `truth` receives
/// the shape's pixels.
struct ShapeFixture {
  NdImage image;
  ForegroundMask truth;
};

inline ShapeFixture shape_fixture(std::size_t index) {
  std::mt19937_64 gen(1000 + index);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t h = 160 + 8 * (index % 5), w = 168 - 4 * (index % 3);
  const float background = static_cast<float>(10.0 * u(gen) - 5.0);
  const float level = background + static_cast<float>((index % 2 ? 1.0 : -1.0) * (2.0 + 3.0 * u(gen)));
  const double cy = static_cast<double>(h) / 2.0 + 10.0 * (u(gen) - 0.5);
  const double cx = static_cast<double>(w) / 2.0 + 10.0 * (u(gen) - 0.5);
  const double ry = 50.0 + 15.0 * u(gen), rx = 50.0 + 15.0 * u(gen);
  const int kind = static_cast<int>(index % 3);  // rectangle, ellipse, rectangle with cut corners
  ShapeFixture f{NdImage(1, {h, w}, background), ForegroundMask({h, w}, 0)};
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double dy = (static_cast<double>(y) - cy) / ry, dx = (static_cast<double>(x) - cx) / rx;
      bool inside = false;
      if (kind == 0) inside = std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
      else if (kind == 1) inside = dy * dy + dx * dx <= 1.0;
      else inside = std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0 && std::abs(dy) + std::abs(dx) <= 1.6;
      if (!inside) continue;
      f.truth[y * w + x] = 1;
      const double tex = 0.3 * std::sin(0.4 * static_cast<double>(x)) * std::cos(0.3 * static_cast<double>(y));
      f.image(0, y * w + x) = level + static_cast<float>(tex);
    }
  return f;
}

inline double iou(const ForegroundMask& a, const ForegroundMask& b) {
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += (a[i] && b[i]) ? 1 : 0;
    uni += (a[i] || b[i]) ? 1 : 0;
  }
  return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 1.0;
}

/// Writes dataset.json plus 8-bit PNG training images of size h x w.
inline void write_png_dataset(const fs::path& root, std::size_t count, std::size_t h, std::size_t w,
                              std::uint64_t seed, bool uniform_background = false) {
  fs::create_directories(root / "imagesTr");
  DatasetDescriptor desc;
  desc.name = "synthetic";
  desc.spatial_rank = 2;
  desc.channels = 1;
  desc.uniform_background = uniform_background;
  desc.safe_augmentations = {{AugmentationKind::flip, {1}, std::nullopt}};
  desc.file_format = FileFormat::png2d;
  io::write_file_atomic(root / "dataset.json", io::to_json(desc).dump(2));
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<std::uint8_t> px(h * w);
    if (uniform_background) {
      const ShapeFixture f = shape_fixture(i);
      // Nearest-neighbour resample of the fixture shape onto h x w, as 8-bit intensities.
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const std::size_t fy = y * f.image.spatial_shape()[0] / h, fx = x * f.image.spatial_shape()[1] / w;
          px[y * w + x] = f.truth[fy * f.image.spatial_shape()[1] + fx] ? static_cast<std::uint8_t>(150 + (x * 7 + y * 3) % 40)
                                                                          : std::uint8_t{20};
        }
    } else {
      const NdImage t = texture({h, w}, 1, seed + i);
      for (std::size_t p = 0; p < h * w; ++p)
        px[p] = static_cast<std::uint8_t>(std::lround(std::clamp(127.5 + 60.0 * t(0, p), 0.0, 255.0)));
    }
    char name[32];
    std::snprintf(name, sizeof(name), "case_%03zu.png", i);
    io::write_png8(root / "imagesTr" / name, h, w, 1, px);
  }
}

/// Unique scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<unsigned> counter{0};
    path_ = fs::temp_directory_path() /
            ("nnoodkit_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

/// Concatenated bytes of every regular file under `dir`, keyed by relative path.
inline std::vector<std::pair<std::string, std::string>> snapshot(const fs::path& dir) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out.emplace_back(fs::relative(e.path(), dir).string(), io::read_file(e.path()));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace fixtures
