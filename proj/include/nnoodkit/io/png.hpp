#pragma once

// 2D PNG input/output through libpng's simplified API. Alpha channels are dropped.

#include <png.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "nnoodkit/errors.hpp"
#include "nnoodkit/io/atomic_file.hpp"
#include "nnoodkit/ndimage.hpp"

namespace nnoodkit::io {

/// Reads an 8- or 16-bit PNG as raw integer intensities, one channel per colour
/// component (1 for grayscale, 3 for colour).
inline NdImage read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str()))
    throw IoError("cannot read PNG " + path.string() + ": " + image.message);
  const bool sixteen = (image.format & PNG_FORMAT_FLAG_LINEAR) != 0;
  const bool colour = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  const std::size_t channels = colour ? 3 : 1;
  image.format = (colour ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY) | (sixteen ? PNG_FORMAT_FLAG_LINEAR : 0u);
  const std::size_t h = image.height, w = image.width;
  NdImage out(channels, Shape{h, w});
  if (sixteen) {
    std::vector<std::uint16_t> buf(PNG_IMAGE_SIZE(image) / 2);
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr))
      throw IoError("cannot decode PNG " + path.string() + ": " + image.message);
    for (std::size_t p = 0; p < h * w; ++p)
      for (std::size_t c = 0; c < channels; ++c) out(c, p) = static_cast<float>(buf[p * channels + c]);
  } else {
    std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr))
      throw IoError("cannot decode PNG " + path.string() + ": " + image.message);
    for (std::size_t p = 0; p < h * w; ++p)
      for (std::size_t c = 0; c < channels; ++c) out(c, p) = static_cast<float>(buf[p * channels + c]);
  }
  return out;
}

/// Encodes interleaved 8-bit gray (1 channel) or RGB (3 channels) rows.
inline std::string encode_png8(std::size_t height, std::size_t width, std::size_t channels,
                               const std::vector<std::uint8_t>& interleaved) {
  if ((channels != 1 && channels != 3) || interleaved.size() != height * width * channels)
    throw InvalidArgument("PNG output needs 1 or 3 interleaved channels");
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, interleaved.data(), 0, nullptr))
    throw IoError(std::string("cannot size PNG: ") + image.message);
  std::string bytes(size, '\0');
  if (!png_image_write_to_memory(&image, bytes.data(), &size, 0, interleaved.data(), 0, nullptr))
    throw IoError(std::string("cannot encode PNG: ") + image.message);
  bytes.resize(size);
  return bytes;
}

inline void write_png8(const std::filesystem::path& path, std::size_t height, std::size_t width, std::size_t channels,
                       const std::vector<std::uint8_t>& interleaved) {
  write_file_atomic(path, encode_png8(height, width, channels, interleaved));
}

/// Writes a single-channel 16-bit grayscale PNG.
inline void write_png16(const std::filesystem::path& path, std::size_t height, std::size_t width,
                        const std::vector<std::uint16_t>& values) {
  if (values.size() != height * width) throw InvalidArgument("PNG16 buffer size mismatch");
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = PNG_FORMAT_LINEAR_Y;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, values.data(), 0, nullptr))
    throw IoError(std::string("cannot size PNG: ") + image.message);
  std::string bytes(size, '\0');
  if (!png_image_write_to_memory(&image, bytes.data(), &size, 0, values.data(), 0, nullptr))
    throw IoError(std::string("cannot encode PNG: ") + image.message);
  bytes.resize(size);
  write_file_atomic(path, bytes);
}

}  // namespace nnoodkit::io
