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
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "quadflow/field.hpp"

namespace quadflow::kitti {

// Flow: 16-bit RGB, channel = round(component * 64 + 32768), blue = valid.
// Invalid pixels are stored as all zeros. Components must satisfy |c| < 512.
std::vector<std::uint8_t> encode_flow_png(const FlowField& flow, const Mask& valid);
std::pair<FlowField, Mask> decode_flow_png(std::span<const std::uint8_t> bytes);
void save_flow_png(const std::string& path, const FlowField& flow, const Mask& valid);
std::pair<FlowField, Mask> load_flow_png(const std::string& path);

// Disparity: 16-bit gray, round(d * 256), 0 = invalid. Valid values must be
// in (0, 256) and must not round to 0.
std::vector<std::uint8_t> encode_disp_png(const DisparityField& disp, const Mask& valid);
std::pair<DisparityField, Mask> decode_disp_png(std::span<const std::uint8_t> bytes);
void save_disp_png(const std::string& path, const DisparityField& disp, const Mask& valid);
std::pair<DisparityField, Mask> load_disp_png(const std::string& path);

// Hue = direction (0 deg for +x), saturation = |w| / max_mag clamped to 1,
// value 1; zero flow is white. max_mag defaults to the field's largest
// magnitude.
Image flow_to_color(const FlowField& flow, std::optional<double> max_mag = std::nullopt);

// Erroneous iff err >= 3 px and err >= 5% of the ground-truth magnitude.
bool is_outlier(double err, double gt_magnitude);

struct SplitMetrics {
  std::size_t count = 0;
  std::optional<double> epe;      // undefined when count == 0
  std::optional<double> outlier;  // Fl (flow) or D1 (disparity) fraction
};

struct MetricsReport {
  SplitMetrics all, noc, occ;

  std::optional<double> epe_all() const { return all.epe; }
  std::optional<double> epe_noc() const { return noc.epe; }
  std::optional<double> epe_occ() const { return occ.epe; }
};

/// Running sums so several fields can be pooled into one report.
class MetricsAccumulator {
 public:
  void add(const FlowField& pred, const FlowField& gt, const Mask& valid, const Mask& noc);
  void add(const DisparityField& pred, const DisparityField& gt, const Mask& valid, const Mask& noc);
  MetricsReport report() const;

 private:
  struct Sums {
    std::size_t count = 0;
    std::size_t outliers = 0;
    double error = 0.0;
  };
  void add_pixel(double err, double gt_mag, bool noc);
  Sums all_, noc_, occ_;
};

// occ = valid & !noc; noc is intersected with valid.
MetricsReport evaluate(const FlowField& pred, const FlowField& gt, const Mask& valid, const Mask& noc);
MetricsReport evaluate(const DisparityField& pred, const DisparityField& gt, const Mask& valid, const Mask& noc);

// One row per (name, report) plus a pooled "aggregate" row when `aggregate` is set.
void write_metrics_csv(const std::string& path, const std::vector<std::pair<std::string, MetricsReport>>& rows,
                       const std::optional<MetricsReport>& aggregate = std::nullopt);
std::string format_metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows);

}  // namespace quadflow::kitti
