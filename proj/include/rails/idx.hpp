#pragma once

// IDX reader/writer (the MNIST container). Files may be gzip-compressed;
// zlib reads plain files unchanged. Images: type 0x08 (u8, scaled by 1/255)
// or 0x0D (big-endian f32, taken as is); labels: type 0x08.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <zlib.h>

#include "rails/binary_io.hpp"
#include "rails/dataset.hpp"
#include "rails/error.hpp"

namespace rails {

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

namespace detail {

inline ByteReader read_maybe_gzip(const std::filesystem::path& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw DataError("cannot open " + path.string());
  std::vector<char> data;
  char buf[1 << 16];
  int n;
  while ((n = gzread(f, buf, sizeof buf)) > 0) data.insert(data.end(), buf, buf + n);
  int err = Z_OK;
  const char* msg = gzerror(f, &err);
  const std::string what = (n < 0 || (err != Z_OK && err != Z_STREAM_END)) ? std::string(msg ? msg : "read error") : "";
  gzclose(f);
  if (!what.empty()) throw FormatError(path.string() + ": " + what);
  return ByteReader(std::move(data), path.string());
}

struct IdxHeader {
  std::uint8_t type = 0;
  std::vector<std::uint32_t> dims;
};

inline IdxHeader read_idx_header(ByteReader& in) {
  const std::uint32_t magic = in.u32_be();
  if ((magic >> 16) != 0) {
    char hex[16];
    std::snprintf(hex, sizeof hex, "0x%08X", magic);
    throw FormatError(in.source() + ": bad magic " + hex);
  }
  IdxHeader h;
  h.type = static_cast<std::uint8_t>((magic >> 8) & 0xFF);
  const auto ndims = magic & 0xFF;
  if (ndims == 0) throw FormatError(in.source() + ": IDX header declares zero dimensions");
  for (std::uint32_t i = 0; i < ndims; ++i) h.dims.push_back(in.u32_be());
  return h;
}

}  // namespace detail

struct IdxImages {
  std::size_t count = 0;
  std::size_t dim = 0;
  std::vector<double> pixels;  // count x dim
};

inline IdxImages load_idx_images(const std::filesystem::path& path) {
  auto in = detail::read_maybe_gzip(path);
  const auto h = detail::read_idx_header(in);
  if (h.type != 0x08 && h.type != 0x0D)
    throw FormatError(in.source() + ": bad magic, unsupported IDX image type " + std::to_string(h.type));
  IdxImages img;
  img.count = h.dims[0];
  img.dim = 1;
  for (std::size_t i = 1; i < h.dims.size(); ++i) img.dim *= h.dims[i];
  const std::size_t n = img.count * img.dim;
  img.pixels.resize(n);
  if (h.type == 0x08) {
    for (auto& p : img.pixels) p = in.u8() / 255.0;
  } else {
    for (auto& p : img.pixels) p = in.f32_be();
  }
  if (in.remaining() != 0) throw FormatError(in.source() + ": trailing bytes at offset " + std::to_string(in.offset()));
  return img;
}

inline std::vector<int> load_idx_labels(const std::filesystem::path& path) {
  auto in = detail::read_maybe_gzip(path);
  const auto h = detail::read_idx_header(in);
  if (h.type != 0x08 || h.dims.size() != 1)
    throw FormatError(in.source() + ": bad magic, expected IDX label file (0x00000801)");
  std::vector<int> labels(h.dims[0]);
  for (auto& l : labels) l = in.u8();
  if (in.remaining() != 0) throw FormatError(in.source() + ": trailing bytes at offset " + std::to_string(in.offset()));
  return labels;
}

inline Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                        int class_count = 10) {
  const auto img = load_idx_images(images);
  const auto lab = load_idx_labels(labels);
  if (img.count != lab.size())
    throw DataError("IDX count mismatch: " + std::to_string(img.count) + " images vs " + std::to_string(lab.size()) +
                    " labels");
  std::vector<LabeledExample> ex(img.count);
  for (std::size_t i = 0; i < img.count; ++i) {
    ex[i].x.assign(img.pixels.begin() + static_cast<std::ptrdiff_t>(i * img.dim),
                   img.pixels.begin() + static_cast<std::ptrdiff_t>((i + 1) * img.dim));
    if (!in_unit_box(ex[i].x)) throw ValidationError(images.string() + ": image " + std::to_string(i) + " leaves [0,1]");
    ex[i].label = lab[i];
  }
  return Dataset(std::move(ex), class_count);  // validates labels
}

// Images as a count x dim f32 IDX tensor (type 0x0D), labels as u8 IDX.
inline void save_idx(const Dataset& data, const std::filesystem::path& images, const std::filesystem::path& labels) {
  detail::ByteWriter wi;
  wi.u32_be(0x00000D02);
  wi.u32_be(static_cast<std::uint32_t>(data.size()));
  wi.u32_be(static_cast<std::uint32_t>(data.dim()));
  for (const auto& e : data.examples())
    for (double v : e.x) wi.f32_be(static_cast<float>(v));
  wi.save(images);

  detail::ByteWriter wl;
  wl.u32_be(kIdxLabelsMagic);
  wl.u32_be(static_cast<std::uint32_t>(data.size()));
  for (const auto& e : data.examples()) {
    if (e.label > 255) throw DataError("IDX labels are single bytes; label " + std::to_string(e.label) + " too large");
    wl.u8(static_cast<std::uint8_t>(e.label));
  }
  wl.save(labels);
}

}  // namespace rails
