#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "nnoodkit/errors.hpp"
#include "nnoodkit/io/nifti.hpp"
#include "nnoodkit/io/png.hpp"
#include "nnoodkit/ndimage.hpp"

namespace nnoodkit::io {

inline bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

/// File name without its image extension (".png", ".nii", ".nii.gz", ".json").
inline std::string image_stem(const std::filesystem::path& path) {
  const std::string name = path.filename().string();
  for (const char* ext : {".nii.gz", ".nii", ".png", ".json"})
    if (ends_with(name, ext)) return name.substr(0, name.size() - std::char_traits<char>::length(ext));
  return path.stem().string();
}

inline bool is_image_file(const std::filesystem::path& path) {
  const std::string name = path.filename().string();
  return ends_with(name, ".png") || ends_with(name, ".nii") || ends_with(name, ".nii.gz");
}

inline NdImage load_image(const std::filesystem::path& path) {
  const std::string name = path.filename().string();
  if (ends_with(name, ".png")) return read_png(path);
  if (ends_with(name, ".nii") || ends_with(name, ".nii.gz")) return read_nifti(path);
  throw IoError("unsupported image format: " + path.string());
}

/// Image files of a directory in lexicographic order.
inline std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace nnoodkit::io
