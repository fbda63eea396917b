#pragma once

// Minimal NIfTI-1 single-file (.nii / .nii.gz) reader and float32 writer.
// Spatial axes are stored reversed so that the contiguous NIfTI x axis is the
// last (contiguous) axis of NdImage; channels occupy the fourth dimension.

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "nnoodkit/errors.hpp"
#include "nnoodkit/io/atomic_file.hpp"
#include "nnoodkit/ndimage.hpp"

namespace nnoodkit::io {

struct Nifti1Header {
  std::int32_t sizeof_hdr;
  char data_type[10];
  char db_name[18];
  std::int32_t extents;
  std::int16_t session_error;
  char regular;
  char dim_info;
  std::int16_t dim[8];
  float intent_p1;
  float intent_p2;
  float intent_p3;
  std::int16_t intent_code;
  std::int16_t datatype;
  std::int16_t bitpix;
  std::int16_t slice_start;
  float pixdim[8];
  float vox_offset;
  float scl_slope;
  float scl_inter;
  std::int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max;
  float cal_min;
  float slice_duration;
  float toffset;
  std::int32_t glmax;
  std::int32_t glmin;
  char descrip[80];
  char aux_file[24];
  std::int16_t qform_code;
  std::int16_t sform_code;
  float quatern_b;
  float quatern_c;
  float quatern_d;
  float qoffset_x;
  float qoffset_y;
  float qoffset_z;
  float srow_x[4];
  float srow_y[4];
  float srow_z[4];
  char intent_name[16];
  char magic[4];
};
static_assert(sizeof(Nifti1Header) == 348, "NIfTI-1 header must be 348 bytes");
static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");

namespace nifti_type {
inline constexpr std::int16_t uint8 = 2, int16 = 4, int32 = 8, float32 = 16, float64 = 64, int8 = 256, uint16 = 512,
                              uint32 = 768;
}

namespace detail {

template <typename T>
T byteswap(T v) {
  auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
  std::reverse(bytes.begin(), bytes.end());
  return std::bit_cast<T>(bytes);
}

inline void swap_header(Nifti1Header& h) {
  h.sizeof_hdr = byteswap(h.sizeof_hdr);
  for (auto& v : h.dim) v = byteswap(v);
  h.datatype = byteswap(h.datatype);
  h.bitpix = byteswap(h.bitpix);
  for (auto& v : h.pixdim) v = byteswap(v);
  h.vox_offset = byteswap(h.vox_offset);
  h.scl_slope = byteswap(h.scl_slope);
  h.scl_inter = byteswap(h.scl_inter);
}

template <typename T>
void convert(const std::vector<unsigned char>& raw, std::vector<float>& out, bool swap) {
  const std::size_t n = raw.size() / sizeof(T);
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    T v;
    std::memcpy(&v, raw.data() + i * sizeof(T), sizeof(T));
    if (swap) v = byteswap(v);
    out[i] = static_cast<float>(v);
  }
}

class GzFile {
 public:
  explicit GzFile(const std::filesystem::path& path) : f_(gzopen(path.string().c_str(), "rb")) {
    if (!f_) throw IoError("cannot open " + path.string());
  }
  ~GzFile() { gzclose(f_); }
  GzFile(const GzFile&) = delete;
  GzFile& operator=(const GzFile&) = delete;

  void read(void* dst, std::size_t n, const std::string& what) {
    auto* p = static_cast<unsigned char*>(dst);
    while (n > 0) {
      const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(n, 1u << 30));
      const int got = gzread(f_, p, chunk);
      if (got <= 0) throw IoError("truncated NIfTI file while reading " + what);
      p += got;
      n -= static_cast<std::size_t>(got);
    }
  }
  void skip(std::size_t n) {
    std::vector<unsigned char> scratch(n);
    if (n) read(scratch.data(), n, "header extension");
  }

 private:
  gzFile f_;
};

}  // namespace detail

/// Reads a .nii or .nii.gz file into float32 values (slope/intercept applied).
inline NdImage read_nifti(const std::filesystem::path& path) {
  detail::GzFile file(path);
  Nifti1Header h{};
  file.read(&h, sizeof(h), "header");
  bool swap = false;
  if (h.sizeof_hdr != 348) {
    detail::swap_header(h);
    swap = true;
    if (h.sizeof_hdr != 348) throw IoError(path.string() + " is not a NIfTI-1 file");
  }
  if (std::memcmp(h.magic, "n+1", 4) != 0) throw IoError(path.string() + " is not a single-file NIfTI-1 image");
  const int ndim = h.dim[0];
  if (ndim < 1 || ndim > 7) throw IoError(path.string() + ": invalid dimension count");
  std::size_t spatial_rank = static_cast<std::size_t>(std::min(ndim, 3));
  std::size_t channels = 1;
  for (int k = 4; k <= ndim; ++k) channels *= static_cast<std::size_t>(std::max<std::int16_t>(h.dim[k], 1));
  // Trailing singleton spatial dimensions are folded away, down to rank 2.
  while (spatial_rank > 2 && h.dim[spatial_rank] == 1) --spatial_rank;
  Shape shape(spatial_rank);
  for (std::size_t a = 0; a < spatial_rank; ++a) {
    const auto extent = h.dim[spatial_rank - a];
    if (extent < 1) throw IoError(path.string() + ": invalid extent");
    shape[a] = static_cast<std::size_t>(extent);
  }
  const std::size_t count = channels * numel(shape);

  std::size_t bytes_per = 0;
  switch (h.datatype) {
    case nifti_type::uint8: case nifti_type::int8: bytes_per = 1; break;
    case nifti_type::int16: case nifti_type::uint16: bytes_per = 2; break;
    case nifti_type::int32: case nifti_type::uint32: case nifti_type::float32: bytes_per = 4; break;
    case nifti_type::float64: bytes_per = 8; break;
    default: throw IoError(path.string() + ": unsupported NIfTI datatype " + std::to_string(h.datatype));
  }
  const auto offset = static_cast<std::size_t>(h.vox_offset);
  if (offset < sizeof(h)) throw IoError(path.string() + ": invalid vox_offset");
  file.skip(offset - sizeof(h));
  std::vector<unsigned char> raw(count * bytes_per);
  file.read(raw.data(), raw.size(), "voxel data");

  std::vector<float> values;
  switch (h.datatype) {
    case nifti_type::uint8: detail::convert<std::uint8_t>(raw, values, swap); break;
    case nifti_type::int8: detail::convert<std::int8_t>(raw, values, swap); break;
    case nifti_type::int16: detail::convert<std::int16_t>(raw, values, swap); break;
    case nifti_type::uint16: detail::convert<std::uint16_t>(raw, values, swap); break;
    case nifti_type::int32: detail::convert<std::int32_t>(raw, values, swap); break;
    case nifti_type::uint32: detail::convert<std::uint32_t>(raw, values, swap); break;
    case nifti_type::float32: detail::convert<float>(raw, values, swap); break;
    case nifti_type::float64: detail::convert<double>(raw, values, swap); break;
  }
  if (h.scl_slope != 0.0f && std::isfinite(h.scl_slope) && !(h.scl_slope == 1.0f && h.scl_inter == 0.0f))
    for (auto& v : values) v = v * h.scl_slope + h.scl_inter;
  return NdImage(channels, std::move(shape), std::move(values));
}

/// Serialises an image as an uncompressed float32 NIfTI-1 byte stream.
inline std::string encode_nifti(const NdImage& img) {
  const std::size_t rank = img.rank();
  if (rank < 1 || rank > 3) throw UnsupportedRankError("NIfTI output needs spatial rank 1-3");
  Nifti1Header h{};
  h.sizeof_hdr = 348;
  h.regular = 'r';
  h.dim[0] = static_cast<std::int16_t>(img.channels() > 1 ? 4 : rank);
  for (int k = 1; k < 8; ++k) h.dim[k] = 1;
  for (std::size_t a = 0; a < rank; ++a) h.dim[rank - a] = static_cast<std::int16_t>(img.spatial_shape()[a]);
  h.dim[4] = static_cast<std::int16_t>(img.channels());
  h.datatype = nifti_type::float32;
  h.bitpix = 32;
  for (auto& p : h.pixdim) p = 1.0f;
  h.vox_offset = 352.0f;
  std::memcpy(h.magic, "n+1", 4);
  std::string out(352 + img.size() * sizeof(float), '\0');
  std::memcpy(out.data(), &h, sizeof(h));
  std::memcpy(out.data() + 352, img.data().data(), img.size() * sizeof(float));
  return out;
}

inline void write_nifti(const std::filesystem::path& path, const NdImage& img) {
  write_file_atomic(path, encode_nifti(img));
}

}  // namespace nnoodkit::io
