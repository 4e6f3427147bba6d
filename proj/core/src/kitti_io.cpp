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
#include "quadflow/kitti_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "quadflow/png_codec.hpp"

namespace quadflow::kitti {
namespace {

constexpr double kFlowScale = 64.0;
constexpr double kFlowOffset = 32768.0;
constexpr double kDispScale = 256.0;

std::uint16_t encode_flow_component(double c) {
  if (!std::isfinite(c) || !(std::abs(c) < 512.0))
    throw std::out_of_range("flow component out of the encodable range (|c| < 512): " + std::to_string(c));
  return static_cast<std::uint16_t>(std::lround(c * kFlowScale + kFlowOffset));
}

}  // namespace

std::vector<std::uint8_t> encode_flow_png(const FlowField& flow, const Mask& valid) {
  require_same_dims(flow.dims(), valid.dims(), "encode_flow_png");
  png::Raster r;
  r.height = flow.height();
  r.width = flow.width();
  r.channels = 3;
  r.bit_depth = 16;
  r.samples.assign(flow.dims().area() * 3, 0);
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x) {
      if (!valid(y, x)) continue;
      std::uint16_t* px = r.samples.data() + (static_cast<std::size_t>(y) * r.width + x) * 3;
      px[0] = encode_flow_component(flow.u()(y, x));
      px[1] = encode_flow_component(flow.v()(y, x));
      px[2] = 1;
    }
  return png::encode(r);
}

std::pair<FlowField, Mask> decode_flow_png(std::span<const std::uint8_t> bytes) {
  const png::Raster r = png::decode(bytes);
  if (r.channels != 3 || r.bit_depth != 16) throw png::DecodeError("flow PNG must be 16-bit RGB");
  FlowField flow(r.height, r.width);
  Mask valid(r.height, r.width, 0);
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x) {
      const std::uint16_t* px = r.samples.data() + (static_cast<std::size_t>(y) * r.width + x) * 3;
      if (px[2] == 0) continue;
      valid(y, x) = 1;
      flow.u()(y, x) = (px[0] - kFlowOffset) / kFlowScale;
      flow.v()(y, x) = (px[1] - kFlowOffset) / kFlowScale;
    }
  return {std::move(flow), std::move(valid)};
}

void save_flow_png(const std::string& path, const FlowField& flow, const Mask& valid) {
  png::write_file(path, encode_flow_png(flow, valid));
}

std::pair<FlowField, Mask> load_flow_png(const std::string& path) { return decode_flow_png(png::read_file(path)); }

std::vector<std::uint8_t> encode_disp_png(const DisparityField& disp, const Mask& valid) {
  require_same_dims(disp.dims(), valid.dims(), "encode_disp_png");
  png::Raster r;
  r.height = disp.height();
  r.width = disp.width();
  r.channels = 1;
  r.bit_depth = 16;
  r.samples.assign(disp.dims().area(), 0);
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x) {
      if (!valid(y, x)) continue;
      const double d = disp(y, x);
      if (!std::isfinite(d) || d < 0.0) throw std::out_of_range("negative or non-finite disparity");
      const long stored = std::lround(d * kDispScale);
      if (stored == 0) throw std::out_of_range("disparity too small to encode: " + std::to_string(d));
      if (stored > 65535) throw std::out_of_range("disparity too large to encode: " + std::to_string(d));
      r.samples[static_cast<std::size_t>(y) * r.width + x] = static_cast<std::uint16_t>(stored);
    }
  return png::encode(r);
}

std::pair<DisparityField, Mask> decode_disp_png(std::span<const std::uint8_t> bytes) {
  const png::Raster r = png::decode(bytes);
  if (r.channels != 1 || r.bit_depth != 16) throw png::DecodeError("disparity PNG must be 16-bit gray");
  DisparityField disp(r.height, r.width);
  Mask valid(r.height, r.width, 0);
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x) {
      const std::uint16_t s = r.samples[static_cast<std::size_t>(y) * r.width + x];
      if (s == 0) continue;
      valid(y, x) = 1;
      disp(y, x) = s / kDispScale;
    }
  return {std::move(disp), std::move(valid)};
}

void save_disp_png(const std::string& path, const DisparityField& disp, const Mask& valid) {
  png::write_file(path, encode_disp_png(disp, valid));
}

std::pair<DisparityField, Mask> load_disp_png(const std::string& path) {
  return decode_disp_png(png::read_file(path));
}

Image flow_to_color(const FlowField& flow, std::optional<double> max_mag) {
  double scale = 0.0;
  if (max_mag) {
    scale = *max_mag;
  } else {
    for (int y = 0; y < flow.height(); ++y)
      for (int x = 0; x < flow.width(); ++x) scale = std::max(scale, std::hypot(flow.u()(y, x), flow.v()(y, x)));
  }
  Image out(flow.height(), flow.width(), 3, 1.0);
  if (!(scale > 0.0)) return out;
  for (int y = 0; y < flow.height(); ++y)
    for (int x = 0; x < flow.width(); ++x) {
      const double u = flow.u()(y, x), v = flow.v()(y, x);
      const double sat = std::min(1.0, std::hypot(u, v) / scale);
      double hue = std::atan2(v, u) * 180.0 / std::numbers::pi;
      if (hue < 0.0) hue += 360.0;
      // HSV -> RGB with value 1.
      const double h = hue / 60.0;
      const double f = h - std::floor(h);
      const double p = 1.0 - sat, q = 1.0 - sat * f, t = 1.0 - sat * (1.0 - f);
      double r = 1, g = 1, b = 1;
      switch (static_cast<int>(std::floor(h)) % 6) {
        case 0: r = 1; g = t; b = p; break;
        case 1: r = q; g = 1; b = p; break;
        case 2: r = p; g = 1; b = t; break;
        case 3: r = p; g = q; b = 1; break;
        case 4: r = t; g = p; b = 1; break;
        default: r = 1; g = p; b = q; break;
      }
      out(y, x, 0) = r;
      out(y, x, 1) = g;
      out(y, x, 2) = b;
    }
  return out;
}

bool is_outlier(double err, double gt_magnitude) { return err >= 3.0 && err >= 0.05 * gt_magnitude; }

void MetricsAccumulator::add_pixel(double err, double gt_mag, bool noc) {
  const bool bad = is_outlier(err, gt_mag);
  for (Sums* s : {&all_, noc ? &noc_ : &occ_}) {
    ++s->count;
    s->error += err;
    if (bad) ++s->outliers;
  }
}

void MetricsAccumulator::add(const FlowField& pred, const FlowField& gt, const Mask& valid, const Mask& noc) {
  require_same_dims(pred.dims(), gt.dims(), "evaluate flow");
  require_same_dims(pred.dims(), valid.dims(), "evaluate valid");
  require_same_dims(pred.dims(), noc.dims(), "evaluate noc");
  for (int y = 0; y < pred.height(); ++y)
    for (int x = 0; x < pred.width(); ++x) {
      if (!valid(y, x)) continue;
      const double gu = gt.u()(y, x), gv = gt.v()(y, x);
      add_pixel(std::hypot(pred.u()(y, x) - gu, pred.v()(y, x) - gv), std::hypot(gu, gv), noc(y, x) != 0);
    }
}

void MetricsAccumulator::add(const DisparityField& pred, const DisparityField& gt, const Mask& valid,
                             const Mask& noc) {
  require_same_dims(pred.dims(), gt.dims(), "evaluate disparity");
  require_same_dims(pred.dims(), valid.dims(), "evaluate valid");
  require_same_dims(pred.dims(), noc.dims(), "evaluate noc");
  for (int y = 0; y < pred.height(); ++y)
    for (int x = 0; x < pred.width(); ++x)
      if (valid(y, x)) add_pixel(std::abs(pred(y, x) - gt(y, x)), std::abs(gt(y, x)), noc(y, x) != 0);
}

MetricsReport MetricsAccumulator::report() const {
  auto split = [](const Sums& s) {
    SplitMetrics m;
    m.count = s.count;
    if (s.count > 0) {
      m.epe = s.error / static_cast<double>(s.count);
      m.outlier = static_cast<double>(s.outliers) / static_cast<double>(s.count);
    }
    return m;
  };
  return {split(all_), split(noc_), split(occ_)};
}

MetricsReport evaluate(const FlowField& pred, const FlowField& gt, const Mask& valid, const Mask& noc) {
  MetricsAccumulator acc;
  acc.add(pred, gt, valid, noc);
  return acc.report();
}

MetricsReport evaluate(const DisparityField& pred, const DisparityField& gt, const Mask& valid, const Mask& noc) {
  MetricsAccumulator acc;
  acc.add(pred, gt, valid, noc);
  return acc.report();
}

namespace {

std::string fmt(const std::optional<double>& v, const char* spec = "%.6f") {
  if (!v) return "";
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, *v);
  return buf;
}

std::string csv_row(const std::string& name, const MetricsReport& m) {
  return name + "," + fmt(m.all.epe) + "," + fmt(m.noc.epe) + "," + fmt(m.occ.epe) + "," + fmt(m.all.outlier) +
         "," + fmt(m.noc.outlier) + "," + fmt(m.occ.outlier) + "," + std::to_string(m.all.count) + "," +
         std::to_string(m.noc.count) + "," + std::to_string(m.occ.count) + "\n";
}

}  // namespace

void write_metrics_csv(const std::string& path, const std::vector<std::pair<std::string, MetricsReport>>& rows,
                       const std::optional<MetricsReport>& aggregate) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "name,epe_all,epe_noc,epe_occ,out_all,out_noc,out_occ,count_all,count_noc,count_occ\n";
  for (const auto& [name, m] : rows) out << csv_row(name, m);
  if (aggregate) out << csv_row("aggregate", *aggregate);
}

std::string format_metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::string s;
  char line[256];
  std::snprintf(line, sizeof(line), "%-12s %9s %9s %9s %8s %8s\n", "field", "EPE-all", "EPE-noc", "EPE-occ",
                "Out-all", "Out-noc");
  s += line;
  auto cell = [](const std::optional<double>& v, bool pct) {
    return v ? fmt(pct ? std::optional<double>(*v * 100.0) : v, pct ? "%.2f%%" : "%.4f") : std::string("-");
  };
  for (const auto& [name, m] : rows) {
    std::snprintf(line, sizeof(line), "%-12s %9s %9s %9s %8s %8s\n", name.c_str(), cell(m.all.epe, false).c_str(),
                  cell(m.noc.epe, false).c_str(), cell(m.occ.epe, false).c_str(), cell(m.all.outlier, true).c_str(),
                  cell(m.noc.outlier, true).c_str());
    s += line;
  }
  return s;
}

}  // namespace quadflow::kitti
