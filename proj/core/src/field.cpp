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
#include "quadflow/field.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "quadflow/png_codec.hpp"

namespace quadflow {

std::string to_string(Dims d) { return std::to_string(d.height) + "x" + std::to_string(d.width); }

void require_same_dims(Dims a, Dims b, const char* what) {
  if (a != b)
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (" + to_string(a) +
                                " vs " + to_string(b) + ")");
}

std::size_t Mask::count() const {
  std::size_t n = 0;
  for (auto v : values()) n += v != 0;
  return n;
}

Mask operator&(const Mask& a, const Mask& b) {
  require_same_dims(a.dims(), b.dims(), "mask and");
  Mask out(a.dims());
  auto o = out.values();
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = (av[i] && bv[i]) ? 1 : 0;
  return out;
}

Mask operator!(const Mask& a) {
  Mask out(a.dims());
  auto o = out.values();
  auto av = a.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] ? 0 : 1;
  return out;
}

Image::Image(int height, int width, int channels, double fill) {
  if (height < 0 || width < 0) throw std::invalid_argument("image: negative dimensions");
  if (channels != 1 && channels != 3) throw std::invalid_argument("image: channels must be 1 or 3");
  if (!(fill >= 0.0 && fill <= 1.0)) throw std::invalid_argument("image: fill outside [0,1]");
  dims_ = {height, width};
  channels_ = channels;
  data_.assign(dims_.area() * channels, fill);
}

Image Image::from_data(int height, int width, int channels, std::vector<double> data) {
  Image img(height, width, channels);
  if (data.size() != img.data_.size()) throw std::invalid_argument("image: data length != H*W*C");
  for (double v : data)
    if (!std::isfinite(v) || v < 0.0 || v > 1.0)
      throw std::invalid_argument("image: values must be finite and in [0,1]");
  img.data_ = std::move(data);
  return img;
}

Plane Image::plane(int c) const {
  if (c < 0 || c >= channels_) throw std::out_of_range("image: channel index");
  Plane p(dims_);
  auto out = p.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = data_[i * channels_ + c];
  return p;
}

Image Image::from_plane(const Plane& p) {
  std::vector<double> data(p.values().begin(), p.values().end());
  return from_data(p.height(), p.width(), 1, std::move(data));
}

FlowField::FlowField(Plane u, Plane v) : u_(std::move(u)), v_(std::move(v)) {
  require_same_dims(u_.dims(), v_.dims(), "flow components");
}

bool FlowField::all_finite() const {
  for (double x : u_.values())
    if (!std::isfinite(x)) return false;
  for (double x : v_.values())
    if (!std::isfinite(x)) return false;
  return true;
}

FlowField FlowField::from_disparity(const DisparityField& d) {
  FlowField f(d.dims());
  auto u = f.u().values();
  auto dv = d.values();
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = -dv[i];
  return f;
}

Image to_grayscale(const Image& img) {
  if (img.channels() == 1) return img;
  Image out(img.height(), img.width(), 1);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const double g = 0.299 * img(y, x, 0) + 0.587 * img(y, x, 1) + 0.114 * img(y, x, 2);
      out(y, x) = std::clamp(g, 0.0, 1.0);
    }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct Stencil {
  int x0, x1, y0, y1;
  double fx, fy;
  bool clamped_x, clamped_y;
};

inline Stencil stencil(Dims d, double x, double y) {
  Stencil s{};
  const double maxx = d.width - 1;
  const double maxy = d.height - 1;
  s.clamped_x = !(x >= 0.0 && x <= maxx);
  s.clamped_y = !(y >= 0.0 && y <= maxy);
  const double cx = std::clamp(x, 0.0, maxx);
  const double cy = std::clamp(y, 0.0, maxy);
  s.x0 = static_cast<int>(std::floor(cx));
  s.y0 = static_cast<int>(std::floor(cy));
  s.x1 = std::min(s.x0 + 1, d.width - 1);
  s.y1 = std::min(s.y0 + 1, d.height - 1);
  s.fx = cx - s.x0;
  s.fy = cy - s.y0;
  return s;
}

}  // namespace

double bilinear(const Plane& p, double x, double y) {
  const Stencil s = stencil(p.dims(), x, y);
  const double top = p(s.y0, s.x0) + s.fx * (p(s.y0, s.x1) - p(s.y0, s.x0));
  const double bot = p(s.y1, s.x0) + s.fx * (p(s.y1, s.x1) - p(s.y1, s.x0));
  return top + s.fy * (bot - top);
}

SampleGrad bilinear_grad(const Plane& p, double x, double y) {
  const Stencil s = stencil(p.dims(), x, y);
  const double a = p(s.y0, s.x0), b = p(s.y0, s.x1), c = p(s.y1, s.x0), d = p(s.y1, s.x1);
  const double top = a + s.fx * (b - a);
  const double bot = c + s.fx * (d - c);
  SampleGrad g;
  g.value = top + s.fy * (bot - top);
  g.dx = s.clamped_x || s.x1 == s.x0 ? 0.0 : (1.0 - s.fy) * (b - a) + s.fy * (d - c);
  g.dy = s.clamped_y || s.y1 == s.y0 ? 0.0 : bot - top;
  return g;
}

void bilinear_scatter(Plane& p, double x, double y, double weight) {
  const Stencil s = stencil(p.dims(), x, y);
  p(s.y0, s.x0) += weight * (1.0 - s.fx) * (1.0 - s.fy);
  p(s.y0, s.x1) += weight * s.fx * (1.0 - s.fy);
  p(s.y1, s.x0) += weight * (1.0 - s.fx) * s.fy;
  p(s.y1, s.x1) += weight * s.fx * s.fy;
}

double bilinear_sample(const Image& img, double x, double y, int c) {
  if (img.empty()) throw std::invalid_argument("bilinear_sample: empty image");
  const Stencil s = stencil(img.dims(), x, y);
  const double top = img(s.y0, s.x0, c) + s.fx * (img(s.y0, s.x1, c) - img(s.y0, s.x0, c));
  const double bot = img(s.y1, s.x0, c) + s.fx * (img(s.y1, s.x1, c) - img(s.y1, s.x0, c));
  return top + s.fy * (bot - top);
}

std::vector<double> bilinear_sample_all(const Image& img, double x, double y) {
  std::vector<double> out(img.channels());
  for (int c = 0; c < img.channels(); ++c) out[c] = bilinear_sample(img, x, y, c);
  return out;
}

bool in_bounds(Dims d, double x, double y) {
  return x >= 0.0 && y >= 0.0 && x <= d.width - 1 && y <= d.height - 1;
}

namespace {

template <typename Get, typename Put>
void box_reduce(Dims in, Get get, Put put) {
  const int oh = (in.height + 1) / 2;
  const int ow = (in.width + 1) / 2;
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double sum = 0.0;
      int n = 0;
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          const int sy = 2 * y + dy, sx = 2 * x + dx;
          if (sy < in.height && sx < in.width) {
            sum += get(sy, sx);
            ++n;
          }
        }
      put(y, x, sum / n);
    }
}

void require_downsample_able(Dims d) {
  if (d.height < 2 || d.width < 2)
    throw std::invalid_argument("downsample2: input must be at least 2x2, got " + to_string(d));
}

}  // namespace

Image downsample2(const Image& img) {
  require_downsample_able(img.dims());
  Image out((img.height() + 1) / 2, (img.width() + 1) / 2, img.channels());
  for (int c = 0; c < img.channels(); ++c)
    box_reduce(
        img.dims(), [&](int y, int x) { return img(y, x, c); },
        [&](int y, int x, double v) { out(y, x, c) = v; });
  return out;
}

Plane downsample2(const Plane& p) {
  require_downsample_able(p.dims());
  Plane out((p.height() + 1) / 2, (p.width() + 1) / 2);
  box_reduce(
      p.dims(), [&](int y, int x) { return p(y, x); }, [&](int y, int x, double v) { out(y, x) = v; });
  return out;
}

FlowField upsample_flow(const FlowField& f, int new_height, int new_width) {
  if (new_height <= 0 || new_width <= 0) throw std::invalid_argument("upsample_flow: non-positive target dims");
  if (f.empty()) throw std::invalid_argument("upsample_flow: empty flow");
  if (new_height < f.height() || new_width < f.width())
    throw std::invalid_argument("upsample_flow: target smaller than source");
  const double sx = static_cast<double>(f.width()) / new_width;
  const double sy = static_cast<double>(f.height()) / new_height;
  const double su = static_cast<double>(new_width) / f.width();
  const double sv = static_cast<double>(new_height) / f.height();
  FlowField out(new_height, new_width);
  for (int y = 0; y < new_height; ++y)
    for (int x = 0; x < new_width; ++x) {
      // Pixel centers align: fine (x + 0.5) covers coarse (x + 0.5) * sx.
      const double xs = (x + 0.5) * sx - 0.5, ys = (y + 0.5) * sy - 0.5;
      out.u()(y, x) = su * bilinear(f.u(), xs, ys);
      out.v()(y, x) = sv * bilinear(f.v(), xs, ys);
    }
  return out;
}

Dims level_dims(Dims d, int k) {
  for (int i = 0; i < k; ++i) d = {(d.height + 1) / 2, (d.width + 1) / 2};
  return d;
}

int max_pyramid_levels(Dims d, int requested) {
  int levels = 1;
  while (levels < requested && d.height >= 2 && d.width >= 2) {
    d = {(d.height + 1) / 2, (d.width + 1) / 2};
    ++levels;
  }
  return levels;
}

Pyramid<Image> build_pyramid(const Image& img, int levels) {
  if (levels < 1) throw std::invalid_argument("build_pyramid: need at least one level");
  Pyramid<Image> pyr;
  pyr.levels.push_back(img);
  for (int k = 1; k < levels; ++k) pyr.levels.push_back(downsample2(pyr.levels.back()));
  return pyr;
}

// ---------------------------------------------------------------------------

Image load_png(const std::string& path) {
  const png::Raster r = png::decode(png::read_file(path));
  if (r.bit_depth != 8) throw png::DecodeError(path + ": expected an 8-bit PNG");
  std::vector<double> data(r.samples.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = r.samples[i] / 255.0;
  return Image::from_data(r.height, r.width, r.channels, std::move(data));
}

void save_png(const Image& img, const std::string& path) {
  png::Raster r{img.height(), img.width(), img.channels(), 8, {}};
  r.samples.resize(img.values().size());
  for (std::size_t i = 0; i < r.samples.size(); ++i)
    r.samples[i] = static_cast<std::uint16_t>(std::lround(std::clamp(img.values()[i], 0.0, 1.0) * 255.0));
  png::write_file(path, png::encode(r));
}

void save_mask_png(const Mask& m, const std::string& path) {
  png::Raster r{m.height(), m.width(), 1, 1, {}};
  r.samples.assign(m.values().begin(), m.values().end());
  for (auto& s : r.samples) s = s ? 1 : 0;
  png::write_file(path, png::encode(r));
}

Mask load_mask_png(const std::string& path) {
  const png::Raster r = png::decode(png::read_file(path));
  if (r.channels != 1) throw png::DecodeError(path + ": mask PNG must be grayscale");
  Mask m(r.height, r.width);
  auto out = m.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = r.samples[i] ? 1 : 0;
  return m;
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_raw(const Image& img) {
  std::vector<std::uint8_t> out;
  out.reserve(12 + img.values().size() * 8);
  put_u32(out, static_cast<std::uint32_t>(img.height()));
  put_u32(out, static_cast<std::uint32_t>(img.width()));
  put_u32(out, static_cast<std::uint32_t>(img.channels()));
  for (double v : img.values()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  return out;
}

Image decode_raw(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12) throw std::runtime_error("raw image: truncated header");
  const auto h = get_u32(bytes, 0), w = get_u32(bytes, 4), c = get_u32(bytes, 8);
  const std::size_t n = static_cast<std::size_t>(h) * w * c;
  if (bytes.size() != 12 + n * 8) throw std::runtime_error("raw image: payload length mismatch");
  std::vector<double> data(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[12 + 8 * k + i]) << (8 * i);
    data[k] = std::bit_cast<double>(bits);
  }
  return Image::from_data(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c), std::move(data));
}

void save_raw(const Image& img, const std::string& path) { png::write_file(path, encode_raw(img)); }
Image load_raw(const std::string& path) { return decode_raw(png::read_file(path)); }

}  // namespace quadflow
