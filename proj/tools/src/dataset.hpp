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

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "quadflow/optimize.hpp"
#include "quadflow/scene.hpp"

namespace quadflow::cli {

// Directory layout shared by the subcommands:
//   view_{1..4}.raw   exact float64 images (view_{k}.png is an 8-bit preview)
//   rig.txt           camera rig
//   gt_flow_{i}_{j}.png, gt_covisible_{i}_{j}.png, gt_disp_t.png, gt_disp_t1.png
//   flow_{i}_{j}.png, conf_{i}_{j}.png   solver outputs

std::string flow_file(const std::string& prefix, Direction d);  // prefix + "1_2.png"

// Returns the written file names.
std::vector<std::string> write_quadset(const std::string& dir, const QuadSet& q);
QuadSet read_quadset(const std::string& dir);

std::vector<std::string> write_ground_truth(const std::string& dir, const GroundTruth& gt);

struct LoadedTruth {
  std::array<FlowField, kNumDirections> flow;
  std::array<Mask, kNumDirections> valid;
  std::array<std::optional<Mask>, kNumDirections> noc;  // absent when no covisibility file exists
};
// Reads {prefix}{dir}.png for all 12 directions, plus gt_covisible files when present.
LoadedTruth read_truth(const std::string& dir, const std::string& prefix);
bool has_ground_truth(const std::string& dir);
// Ground truth as a bundle (covisible masks included); throws if incomplete.
GroundTruth read_ground_truth_bundle(const std::string& dir);

// Flow PNGs (valid everywhere) and 1-bit confidence masks.
std::vector<std::string> write_bundle(const std::string& dir, const FlowBundle& b, const ConfidenceSet* conf);
FlowBundle read_bundle(const std::string& dir, const std::string& prefix = "flow_");
ConfidenceSet read_confidence(const std::string& dir);

}  // namespace quadflow::cli
