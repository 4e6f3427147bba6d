/* Copyright 2026 The Quadflow Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "quadflow/png_codec.hpp"

#include <png.h>

#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>

// After a longjmp only ptr/info are read, and neither changes after setjmp.
#if defined(__GNUC__) && !defined(__clang__)
#pragma GCC diagnostic ignored "-Wclobbered"
#endif

namespace quadflow::png {
namespace {

struct ReadCursor {
  std::span<const std::uint8_t> bytes;
  std::size_t offset = 0;
};

void read_cb(png_structp ptr, png_bytep out, png_size_t n) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(ptr));
  if (cur->offset + n > cur->bytes.size()) png_error(ptr, "truncated PNG stream");
  std::memcpy(out, cur->bytes.data() + cur->offset, n);
  cur->offset += n;
}

void write_cb(png_structp ptr, png_bytep data, png_size_t n) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(ptr));
  out->insert(out->end(), data, data + n);
}

void flush_cb(png_structp) {}

// libpng reports errors by longjmp; the message is parked here and rethrown
// as an exception once control is back in C++ frames.
thread_local std::string g_last_error;

void error_cb(png_structp ptr, png_const_charp msg) {
  g_last_error = msg ? msg : "unknown libpng error";
  longjmp(png_jmpbuf(ptr), 1);
}
void warning_cb(png_structp, png_const_charp) {}

}  // namespace

std::vector<std::uint8_t> encode(const Raster& r) {
  if (r.height <= 0 || r.width <= 0) throw std::invalid_argument("png: empty raster");
  if (r.channels != 1 && r.channels != 3) throw std::invalid_argument("png: channels must be 1 or 3");
  if (r.bit_depth != 1 && r.bit_depth != 8 && r.bit_depth != 16)
    throw std::invalid_argument("png: bit depth must be 1, 8 or 16");
  if (r.bit_depth == 1 && r.channels != 1) throw std::invalid_argument("png: 1-bit must be gray");
  if (r.samples.size() != static_cast<std::size_t>(r.height) * r.width * r.channels)
    throw std::invalid_argument("png: sample count mismatch");

  std::vector<std::uint8_t> out;
  png_structp ptr = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, error_cb, warning_cb);
  if (!ptr) throw std::runtime_error("png: cannot create write struct");
  png_infop info = png_create_info_struct(ptr);
  if (!info) {
    png_destroy_write_struct(&ptr, nullptr);
    throw std::runtime_error("png: cannot create info struct");
  }

  const std::size_t row_bytes =
      r.bit_depth == 1 ? (static_cast<std::size_t>(r.width) + 7) / 8
                       : static_cast<std::size_t>(r.width) * r.channels * (r.bit_depth / 8);
  std::vector<std::uint8_t> row(row_bytes);
  if (setjmp(png_jmpbuf(ptr))) {
    png_destroy_write_struct(&ptr, &info);
    throw std::runtime_error("png encode: " + g_last_error);
  }
  {
    png_set_write_fn(ptr, &out, write_cb, flush_cb);
    png_set_IHDR(ptr, info, static_cast<png_uint_32>(r.width), static_cast<png_uint_32>(r.height),
                 r.bit_depth, r.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(ptr, 6);
    png_write_info(ptr, info);
    for (int y = 0; y < r.height; ++y) {
      std::fill(row.begin(), row.end(), 0);
      const std::uint16_t* src = r.samples.data() + static_cast<std::size_t>(y) * r.width * r.channels;
      if (r.bit_depth == 1) {
        for (int x = 0; x < r.width; ++x)
          if (src[x]) row[x / 8] |= static_cast<std::uint8_t>(0x80u >> (x % 8));
      } else if (r.bit_depth == 8) {
        for (int i = 0; i < r.width * r.channels; ++i) row[i] = static_cast<std::uint8_t>(src[i]);
      } else {
        // PNG stores 16-bit samples big-endian.
        for (int i = 0; i < r.width * r.channels; ++i) {
          row[2 * i] = static_cast<std::uint8_t>(src[i] >> 8);
          row[2 * i + 1] = static_cast<std::uint8_t>(src[i] & 0xff);
        }
      }
      png_write_row(ptr, row.data());
    }
    png_write_end(ptr, nullptr);
  }
  png_destroy_write_struct(&ptr, &info);
  return out;
}

Raster decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw DecodeError("png: bad signature");

  png_structp ptr = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, error_cb, warning_cb);
  if (!ptr) throw std::runtime_error("png: cannot create read struct");
  png_infop info = png_create_info_struct(ptr);
  if (!info) {
    png_destroy_read_struct(&ptr, nullptr, nullptr);
    throw std::runtime_error("png: cannot create info struct");
  }

  Raster r;
  ReadCursor cursor{bytes, 0};
  std::vector<std::uint8_t> buf;
  std::vector<png_bytep> rows;
  bool bad_layout = false;
  if (setjmp(png_jmpbuf(ptr))) {
    png_destroy_read_struct(&ptr, &info, nullptr);
    throw DecodeError("png decode: " + g_last_error);
  }
  {
    png_set_read_fn(ptr, &cursor, read_cb);
    png_read_info(ptr, info);
    const int color = png_get_color_type(ptr, info);
    const int depth = png_get_bit_depth(ptr, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(ptr);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(ptr);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(ptr);
    if (png_get_valid(ptr, info, PNG_INFO_tRNS)) png_set_strip_alpha(ptr);
    png_read_update_info(ptr, info);

    r.width = static_cast<int>(png_get_image_width(ptr, info));
    r.height = static_cast<int>(png_get_image_height(ptr, info));
    r.channels = png_get_channels(ptr, info);
    r.bit_depth = png_get_bit_depth(ptr, info);
    if (r.channels != 1 && r.channels != 3) bad_layout = true;
    // Sub-byte gray was expanded to 8 bits, but keep the scaled sample range.
    const bool was_one_bit = color == PNG_COLOR_TYPE_GRAY && depth == 1;

    if (bad_layout) {
      png_destroy_read_struct(&ptr, &info, nullptr);
      throw DecodeError("png: unsupported channel layout");
    }
    const std::size_t row_bytes = png_get_rowbytes(ptr, info);
    buf.resize(row_bytes * r.height);
    rows.resize(r.height);
    for (int y = 0; y < r.height; ++y) rows[y] = buf.data() + row_bytes * y;
    png_read_image(ptr, rows.data());
    png_read_end(ptr, nullptr);

    const std::size_t n = static_cast<std::size_t>(r.width) * r.channels;
    r.samples.resize(n * r.height);
    for (int y = 0; y < r.height; ++y) {
      const std::uint8_t* src = rows[y];
      std::uint16_t* dst = r.samples.data() + n * y;
      if (r.bit_depth == 16) {
        for (std::size_t i = 0; i < n; ++i)
          dst[i] = static_cast<std::uint16_t>((src[2 * i] << 8) | src[2 * i + 1]);
      } else {
        for (std::size_t i = 0; i < n; ++i) dst[i] = src[i];
      }
    }
    if (was_one_bit) {
      r.bit_depth = 1;
      for (auto& s : r.samples) s = s ? 1 : 0;
    }
  }
  png_destroy_read_struct(&ptr, &info, nullptr);
  return r;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace quadflow::png
