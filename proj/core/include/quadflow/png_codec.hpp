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
#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace quadflow::png {

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Samples are stored widened to u16 regardless of bit depth; interleaved.
struct Raster {
  int height = 0;
  int width = 0;
  int channels = 1;   // 1 (gray) or 3 (RGB)
  int bit_depth = 8;  // 1, 8 or 16
  std::vector<std::uint16_t> samples;

  std::uint16_t& at(int y, int x, int c) {
    return samples[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint16_t at(int y, int x, int c) const {
    return samples[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

std::vector<std::uint8_t> encode(const Raster& r);
// Palette, alpha and sub-byte gray inputs are expanded; 16-bit stays 16-bit.
Raster decode(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace quadflow::png
