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

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace quadflow {

struct Dims {
  int height = 0;
  int width = 0;

  std::size_t area() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }
  bool operator==(const Dims&) const = default;
};

std::string to_string(Dims d);

// Throws std::invalid_argument naming `what` when the two extents differ.
void require_same_dims(Dims a, Dims b, const char* what);

/// Dense row-major single-plane raster. Every field type in the library is a
/// Grid or a thin strong type over one.
template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(int height, int width, T fill = T{})
      : dims_{height, width}, data_(checked_area(height, width), fill) {}
  explicit Grid(Dims d, T fill = T{}) : Grid(d.height, d.width, fill) {}

  int height() const { return dims_.height; }
  int width() const { return dims_.width; }
  Dims dims() const { return dims_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int y, int x) { return data_[index(y, x)]; }
  const T& operator()(int y, int x) const { return data_[index(y, x)]; }

  std::size_t index(int y, int x) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(dims_.width) +
           static_cast<std::size_t>(x);
  }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Grid&) const = default;

 private:
  static std::size_t checked_area(int h, int w) {
    if (h < 0 || w < 0) throw std::invalid_argument("negative grid dimensions");
    return static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }

  Dims dims_{};
  std::vector<T> data_;
};

using Plane = Grid<double>;

/// Per-pixel binary confidence / validity. 1 means confident (or valid,
/// co-visible, in bounds, depending on the producer).
class Mask : public Grid<std::uint8_t> {
 public:
  using Grid::Grid;
  Mask(const Grid<std::uint8_t>& g) : Grid(g) {}  // NOLINT

  std::size_t count() const;
  static Mask ones(Dims d) { return Mask(d, 1); }
};

Mask operator&(const Mask& a, const Mask& b);
Mask operator!(const Mask& a);

/// Disparity in pixels, d >= 0. Left-to-right stereo flow is (-d, 0).
class DisparityField : public Grid<double> {
 public:
  using Grid::Grid;
};

/// Intensities in [0,1], row-major, channel-interleaved.
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels = 1, double fill = 0.0);
  // Validates the invariants (finite, in [0,1], matching length).
  static Image from_data(int height, int width, int channels, std::vector<double> data);

  int height() const { return dims_.height; }
  int width() const { return dims_.width; }
  int channels() const { return channels_; }
  Dims dims() const { return dims_; }
  bool empty() const { return data_.empty(); }

  double& operator()(int y, int x, int c = 0) { return data_[index(y, x, c)]; }
  double operator()(int y, int x, int c = 0) const { return data_[index(y, x, c)]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  // Channel c as a plane (copy).
  Plane plane(int c = 0) const;
  static Image from_plane(const Plane& p);

  bool operator==(const Image&) const = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(dims_.width) +
            static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(channels_) +
           static_cast<std::size_t>(c);
  }

  Dims dims_{};
  int channels_ = 1;
  std::vector<double> data_;
};

/// Dense displacement field (u along x, v along y), in pixels of its own grid.
class FlowField {
 public:
  FlowField() = default;
  FlowField(int height, int width, double u = 0.0, double v = 0.0)
      : u_(height, width, u), v_(height, width, v) {}
  explicit FlowField(Dims d, double u = 0.0, double v = 0.0) : FlowField(d.height, d.width, u, v) {}
  FlowField(Plane u, Plane v);

  int height() const { return u_.height(); }
  int width() const { return u_.width(); }
  Dims dims() const { return u_.dims(); }
  bool empty() const { return u_.empty(); }

  Plane& u() { return u_; }
  Plane& v() { return v_; }
  const Plane& u() const { return u_; }
  const Plane& v() const { return v_; }
  Plane& component(int k) { return k == 0 ? u_ : v_; }
  const Plane& component(int k) const { return k == 0 ? u_ : v_; }

  bool all_finite() const;
  bool operator==(const FlowField&) const = default;

  static FlowField from_disparity(const DisparityField& d);

 private:
  Plane u_;
  Plane v_;
};

Image to_grayscale(const Image& img);

// ---------------------------------------------------------------------------
// Resampling

struct SampleGrad {
  double value = 0.0;
  double dx = 0.0;  // d value / d x, zero where the coordinate is clamped
  double dy = 0.0;
};

/// Clamp-to-edge bilinear interpolation on a plane.
double bilinear(const Plane& p, double x, double y);
SampleGrad bilinear_grad(const Plane& p, double x, double y);

// Adds `weight` into the four bilinear support pixels of (x, y) with the same
// clamping as `bilinear`. Adjoint of sampling.
void bilinear_scatter(Plane& p, double x, double y, double weight);

/// Clamp-to-edge bilinear sample of channel c.
double bilinear_sample(const Image& img, double x, double y, int c = 0);
std::vector<double> bilinear_sample_all(const Image& img, double x, double y);

bool in_bounds(Dims d, double x, double y);

/// 2x2 box average; odd trailing rows/columns average the available pixels.
Image downsample2(const Image& img);
Plane downsample2(const Plane& p);

FlowField upsample_flow(const FlowField& f, int new_height, int new_width);

template <typename T>
struct Pyramid {
  std::vector<T> levels;  // level 0 is full resolution

  std::size_t size() const { return levels.size(); }
  const T& operator[](std::size_t k) const { return levels[k]; }
};

Pyramid<Image> build_pyramid(const Image& img, int levels);
// Dims of level k: ceil(d / 2^k).
Dims level_dims(Dims d, int k);
// Largest usable level count not exceeding `requested` (every level must be
// downsample-able down to the next one).
int max_pyramid_levels(Dims d, int requested);

// ---------------------------------------------------------------------------
// I/O. 8-bit PNGs map v/255; the raw dump is (H, W, C) as u32 LE followed by
// H*W*C float64 LE.

Image load_png(const std::string& path);
void save_png(const Image& img, const std::string& path);
void save_mask_png(const Mask& m, const std::string& path);  // 1-bit gray
Mask load_mask_png(const std::string& path);

std::vector<std::uint8_t> encode_raw(const Image& img);
Image decode_raw(std::span<const std::uint8_t> bytes);
void save_raw(const Image& img, const std::string& path);
Image load_raw(const std::string& path);

}  // namespace quadflow
