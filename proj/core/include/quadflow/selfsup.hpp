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
#include <cstdint>
#include <string>
#include <vector>

#include "quadflow/config.hpp"
#include "quadflow/optimize.hpp"

namespace quadflow {

/// Crop (on the original grid) followed by a box downsample. Proxy pixel p'
/// maps to original x0 + s x' + (s - 1) / 2 along each axis.
struct ProxyTransform {
  int x0 = 0;
  int y0 = 0;
  int width = 0;   // crop extent, original pixels
  int height = 0;
  int scale = 1;   // 1 or 2
  double noise = 0.0;            // uniform [-noise, noise] added to noise_views
  std::vector<int> noise_views;  // 1-based
  std::uint64_t seed = 0;

  Dims proxy_dims() const { return {height / scale, width / scale}; }
  Point2 to_original(Point2 p) const;
  Point2 to_proxy(Point2 p) const;
  // Proxy pixels land on original pixels.
  bool lattice_aligned() const { return scale == 1; }
  // Throws std::invalid_argument when the crop leaves `original`, is smaller
  // than 32 px, or is not divisible by the scale.
  void validate(Dims original) const;

  static ProxyTransform identity(Dims d);
};

// Coordinate map of `second` (acting on the proxy grid of `first`) followed by
// `first`. Noise settings are taken from `second`. The combined scale must be 1 or 2.
ProxyTransform compose(const ProxyTransform& first, const ProxyTransform& second);

struct ProxyConfig {
  double crop_min_fraction = 0.6;  // crop side as a fraction of the image side
  double crop_max_fraction = 0.9;
  double scale2_probability = 0.0;
  double noise_amplitude = 0.04;
  std::vector<int> noise_views{3, 4};

  void validate() const;  // throws ConfigError
  static ProxyConfig from_key_values(const KeyValues& kv);
  void to_key_values(KeyValues& kv) const;
  // Full crop, scale 1, no noise.
  static ProxyConfig identity();
};

// Samples a transform deterministically from (seed, cfg). Throws
// std::invalid_argument when the image is smaller than the minimum crop.
ProxyTransform sample_proxy_transform(Dims original, std::uint64_t seed, const ProxyConfig& cfg);

// Crops, box-downsamples and perturbs the four images; the rig is adjusted
// to the proxy grid.
QuadSet apply_proxy(const QuadSet& quadset, const ProxyTransform& t);

struct ProxySample {
  QuadSet quadset;
  ProxyTransform transform;
};
ProxySample make_proxy(const QuadSet& quadset, std::uint64_t seed, const ProxyConfig& cfg);

struct Labels {
  FlowField flow;
  Mask mask;
};

// flow'(p') = w(T(p')) / s, mask'(p') = M at the nearest pixel to T(p').
// Exact lattice reads when T is lattice-aligned, bilinear otherwise.
Labels transport_labels(const FlowField& w, const Mask& m, const ProxyTransform& t);
// Inverse direction onto the original grid; zero with mask 0 outside the crop.
Labels untransport_labels(const FlowField& w, const Mask& m, const ProxyTransform& t, Dims original);

struct LabelSet {
  FlowBundle flows;
  std::array<Mask, kNumDirections> masks;
};
LabelSet transport_labels(const FlowBundle& b, const std::array<Mask, kNumDirections>& masks,
                          const ProxyTransform& t);
// Bundle seen through the proxy frame (no masks).
FlowBundle to_proxy_frame(const FlowBundle& b, const ProxyTransform& t);

// Per direction: transported labels pass the forward-backward check in the
// proxy frame (landing inside it).
std::array<Mask, kNumDirections> proxy_visibility(const LabelSet& labels, const ConsistencyConfig& cfg);

// Pixels co-visible in the original whose ground-truth correspondence leaves
// the proxy view, on the proxy grid.
std::array<Mask, kNumDirections> crop_occluded(const GroundTruth& gt, const ProxyTransform& t);

enum class SelfsupVariant { kV1, kV2, kV3, kV4 };
SelfsupVariant parse_selfsup_variant(const std::string& tag);  // throws ConfigError
std::string to_string(SelfsupVariant v);

struct SelfsupConfig {
  SelfsupVariant variant = SelfsupVariant::kV2;
  int proxy_count = 8;      // used by v3 and v4
  std::uint64_t proxy_seed = 0;
  ProxyConfig proxy;        // v1 and v2 use its crop only
  ConsistencyConfig consistency;

  void validate() const;
  static SelfsupConfig from_key_values(const KeyValues& kv);
  void to_key_values(KeyValues& kv) const;
};

/// What a variant turns on.
struct VariantPlan {
  SelfsupVariant variant = SelfsupVariant::kV2;
  bool gate_occlusion = false;  // v1
  bool geometric = false;       // v4
  std::vector<ProxyTransform> schedule;
};

// v1/v2: one crop-only proxy; v3/v4: proxy_count proxies, each with crop,
// noise and scale 2.
VariantPlan selfsup_variant(SelfsupVariant v, Dims original, const SelfsupConfig& cfg);

struct StudentProxy {
  ProxyTransform transform;
  LabelSet labels;  // already gated
};

// Transports the teacher bundle and confidence into each proxy of the plan
// and applies the variant's gate.
std::vector<StudentProxy> prepare_student(const VariantPlan& plan, const FlowBundle& teacher,
                                          const ConfidenceSet& teacher_confidence, const ConsistencyConfig& cfg);

struct StudentOptions {
  // When set, lambda1 Lq + lambda2 Lt on the student with these masks joins the objective.
  const ConfidenceSet* geometric = nullptr;
};

struct StudentResult {
  FlowBundle bundle;  // original grid
  std::vector<LossReport> trace;
};

// Minimises mean_k Ls_k + lambda_s smoothness over a bundle on the original
// grid, where Ls_k compares the bundle seen through proxy k with its labels.
// Masks are never recomputed. Throws std::invalid_argument when every label
// mask is empty.
StudentResult solve_student(const std::vector<StudentProxy>& proxies, Dims original, const SolverConfig& solver,
                            const LossConfig& loss, const StudentOptions& opts = {});

struct SelfsupRun {
  VariantPlan plan;
  StudentResult student;
};
// Plan, transport and solve in one call.
SelfsupRun run_selfsup(const FlowBundle& teacher, const ConfidenceSet& teacher_confidence, Dims original,
                       const SelfsupConfig& cfg, const SolverConfig& solver, const LossConfig& loss);

}  // namespace quadflow
