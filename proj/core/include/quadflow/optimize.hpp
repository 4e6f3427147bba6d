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
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "quadflow/config.hpp"
#include "quadflow/geometry.hpp"
#include "quadflow/kitti_io.hpp"
#include "quadflow/losses.hpp"
#include "quadflow/scene.hpp"
#include "quadflow/warp.hpp"

namespace quadflow {

/// Raised when the objective or an iterate stops being finite.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SolverConfig {
  int pyramid_levels = 4;
  int iterations = 300;       // per level
  // Jacobi preconditioning with the losses' majorizer curvature; without it
  // the step is taken on the pixel-count-scaled gradient.
  bool precondition = true;
  double damping = 0.01;      // added curvature, relative to its mean
  double step = 1.0;          // initial step
  double step_max = 2.0;
  double step_growth = 1.25;  // after an accepted step
  double step_shrink = 0.5;   // per backtracking trial
  int max_backtracks = 20;
  double armijo = 1e-4;
  double lambda_s = 0.05;     // smoothness weight
  double tolerance = 1e-6;    // relative objective change that ends a level
  int refresh_interval = 25;  // iterations between confidence refreshes
  std::uint64_t init_seed = 0;
  double init_noise = 0.0;    // uniform [-a, a] px added to the initial flow
  // Coarse-to-fine block matching seeds the descent at full resolution.
  bool match_init = true;
  double match_radius = 16.0;  // search radius in full-resolution pixels
  int match_box = 2;           // cost aggregation radius, pixels of each level

  void validate() const;  // throws ConfigError
  static SolverConfig from_key_values(const KeyValues& kv);
  void to_key_values(KeyValues& kv) const;
};

/// One pyramid level of a problem: the objective with its gradient and
/// curvature (either may be null), and a hook run before descent and every
/// refresh_interval iterations.
struct LevelProblem {
  std::function<LossReport(const FlowBundle&, FlowBundle* grad, FlowBundle* curvature)> evaluate;
  std::function<void(const FlowBundle&)> refresh;
};

struct DescentOptions {
  // Levels are solved coarsest first; level k has dims level_dims(full, k).
  int levels = 1;
  // Warm start at the finest level; the pyramid is skipped when present.
  const FlowBundle* init = nullptr;
  // Starting iterate on the coarsest level instead of zero flow.
  const FlowBundle* coarse_init = nullptr;
};

// Preconditioned gradient descent with backtracking on every level, upsampling between
// levels. Stereo v components stay zero on rectified bundles. Throws
// NumericError on non-finite objectives.
FlowBundle descend_coarse_to_fine(Dims full, const SolverConfig& cfg, const DescentOptions& opts,
                                  const std::function<LevelProblem(int level, Dims dims)>& make_level,
                                  std::vector<LossReport>* trace = nullptr);

// Largest level count <= requested whose coarsest level still fits the
// census window.
int usable_levels(Dims full, int requested, int min_extent);

struct MatchOptions {
  int radius_u = 0;  // search radius around the seed
  int radius_v = 0;
  int box = 2;       // aggregation radius
  bool subpixel = false;
  const FlowField* seed = nullptr;  // rounded per pixel; zero when null
};

// Displacement per pixel minimising the L1 distance of census descriptors (raw
// intensities in raw mode) summed over a (2 box + 1)^2 window. Landings are
// clamped to the frame; ties keep the offset closest to the seed. With
// `subpixel`, a parabola fit refines each searched axis by up to half a pixel.
FlowField block_match(const Image& image_i, const Image& image_j, const MatchOptions& opts, const LossConfig& cfg);

// Full search at the coarsest level, then +-1 pixel around the upsampled
// estimate per level, subpixel at level 0. `radius` is in level-0 pixels.
FlowField match_coarse_to_fine(const Pyramid<Image>& from, const Pyramid<Image>& to, double radius, bool vertical,
                               int box, const LossConfig& cfg);

struct TeacherResult {
  FlowBundle bundle;
  ConfidenceSet confidence;
  std::vector<LossReport> trace;
};

TeacherResult solve_teacher(const QuadSet& quadset, const SolverConfig& solver, const LossConfig& loss,
                            const ConsistencyConfig& consistency, TermToggles toggles = {},
                            const FlowBundle* init = nullptr);

// EPE/Fl over all 12 fields pooled, against ground truth (valid everywhere,
// noc = co-visible).
kitti::MetricsReport evaluate_bundle(const FlowBundle& pred, const GroundTruth& gt);
kitti::MetricsReport evaluate_field(const FlowBundle& pred, const GroundTruth& gt, int direction);

struct AblationRow {
  TermToggles toggles;
  kitti::MetricsReport metrics;
  LossReport final_loss;
};

// Runs solve_teacher once per toggle set with identical configs. Toggle sets
// without lp are rejected.
std::vector<AblationRow> ablate(const QuadSet& quadset, const GroundTruth& gt, const std::vector<TermToggles>& sets,
                                const SolverConfig& solver, const LossConfig& loss,
                                const ConsistencyConfig& consistency);
std::string format_ablation_table(const std::vector<AblationRow>& rows);

}  // namespace quadflow
