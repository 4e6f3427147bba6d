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
#include "dataset.hpp"

#include <filesystem>

#include "quadflow/kitti_io.hpp"

namespace quadflow::cli {
namespace fs = std::filesystem;

std::string flow_file(const std::string& prefix, Direction d) { return prefix + direction_name(d) + ".png"; }

std::vector<std::string> write_quadset(const std::string& dir, const QuadSet& q) {
  std::vector<std::string> files;
  for (int v = 1; v <= kNumViews; ++v) {
    const std::string base = "view_" + std::to_string(v);
    save_raw(q.image(v), (fs::path(dir) / (base + ".raw")).string());
    save_png(q.image(v), (fs::path(dir) / (base + ".png")).string());
    files.push_back(base + ".raw");
    files.push_back(base + ".png");
  }
  save_rig(q.rig, (fs::path(dir) / "rig.txt").string());
  files.push_back("rig.txt");
  return files;
}

QuadSet read_quadset(const std::string& dir) {
  QuadSet q;
  for (int v = 1; v <= kNumViews; ++v) {
    const fs::path raw = fs::path(dir) / ("view_" + std::to_string(v) + ".raw");
    const fs::path png = fs::path(dir) / ("view_" + std::to_string(v) + ".png");
    q.image(v) = fs::exists(raw) ? load_raw(raw.string()) : load_png(png.string());
  }
  const fs::path rig = fs::path(dir) / "rig.txt";
  if (fs::exists(rig)) {
    q.rig = load_rig(rig.string());
  } else {
    q.rig.height = q.images[0].height();
    q.rig.width = q.images[0].width();
    q.rig.cx = 0.5 * (q.rig.width - 1);
    q.rig.cy = 0.5 * (q.rig.height - 1);
  }
  q.validate();
  return q;
}

std::vector<std::string> write_ground_truth(const std::string& dir, const GroundTruth& gt) {
  std::vector<std::string> files;
  const Mask all = Mask::ones(gt.bundle.dims());
  for (int k = 0; k < kNumDirections; ++k) {
    const std::string f = flow_file("gt_flow_", kDirections[k]);
    const std::string m = "gt_covisible_" + direction_name(kDirections[k]) + ".png";
    kitti::save_flow_png((fs::path(dir) / f).string(), gt.bundle[k], all);
    save_mask_png(gt.covisible[k], (fs::path(dir) / m).string());
    files.push_back(f);
    files.push_back(m);
  }
  kitti::save_disp_png((fs::path(dir) / "gt_disp_t.png").string(), gt.disparity_t, all);
  kitti::save_disp_png((fs::path(dir) / "gt_disp_t1.png").string(), gt.disparity_t1, all);
  files.push_back("gt_disp_t.png");
  files.push_back("gt_disp_t1.png");
  return files;
}

LoadedTruth read_truth(const std::string& dir, const std::string& prefix) {
  LoadedTruth t;
  for (int k = 0; k < kNumDirections; ++k) {
    auto [flow, valid] = kitti::load_flow_png((fs::path(dir) / flow_file(prefix, kDirections[k])).string());
    t.flow[k] = std::move(flow);
    t.valid[k] = std::move(valid);
    const fs::path cov = fs::path(dir) / ("gt_covisible_" + direction_name(kDirections[k]) + ".png");
    if (fs::exists(cov)) t.noc[k] = load_mask_png(cov.string());
  }
  return t;
}

bool has_ground_truth(const std::string& dir) {
  for (const Direction& d : kDirections)
    if (!fs::exists(fs::path(dir) / flow_file("gt_flow_", d))) return false;
  return true;
}

GroundTruth read_ground_truth_bundle(const std::string& dir) {
  const LoadedTruth t = read_truth(dir, "gt_flow_");
  GroundTruth gt;
  gt.bundle = FlowBundle(t.flow[0].dims(), true);
  for (int k = 0; k < kNumDirections; ++k) {
    if (!t.noc[k]) throw std::runtime_error(dir + ": missing covisibility mask for " + direction_name(kDirections[k]));
    gt.bundle[k] = t.flow[k];
    gt.covisible[k] = *t.noc[k];
  }
  gt.bundle.enforce_rectification();
  return gt;
}

std::vector<std::string> write_bundle(const std::string& dir, const FlowBundle& b, const ConfidenceSet* conf) {
  std::vector<std::string> files;
  const Mask all = Mask::ones(b.dims());
  for (int k = 0; k < kNumDirections; ++k) {
    const std::string f = flow_file("flow_", kDirections[k]);
    kitti::save_flow_png((fs::path(dir) / f).string(), b[k], all);
    files.push_back(f);
    if (conf) {
      const std::string m = "conf_" + direction_name(kDirections[k]) + ".png";
      save_mask_png(conf->direction[k], (fs::path(dir) / m).string());
      files.push_back(m);
    }
  }
  return files;
}

FlowBundle read_bundle(const std::string& dir, const std::string& prefix) {
  FlowBundle b;
  for (int k = 0; k < kNumDirections; ++k) {
    auto [flow, valid] = kitti::load_flow_png((fs::path(dir) / flow_file(prefix, kDirections[k])).string());
    if (k == 0) b = FlowBundle(flow.dims(), true);
    require_same_dims(flow.dims(), b.dims(), "read_bundle");
    b[k] = std::move(flow);
  }
  b.enforce_rectification();
  return b;
}

ConfidenceSet read_confidence(const std::string& dir) {
  ConfidenceSet c;
  for (int k = 0; k < kNumDirections; ++k)
    c.direction[k] = load_mask_png((fs::path(dir) / ("conf_" + direction_name(kDirections[k]) + ".png")).string());
  return c;
}

}  // namespace quadflow::cli
