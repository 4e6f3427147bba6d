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

#include "quadflow/config.hpp"
#include "quadflow/field.hpp"
#include "quadflow/geometry.hpp"

namespace quadflow {

struct ConsistencyConfig {
  double alpha1 = 0.01;  // relative term
  double alpha2 = 0.5;   // absolute term, px^2
  // Read the backward flow at the rounded landing point instead of bilinearly.
  bool nearest_backward = false;

  void validate() const;  // throws ConfigError
  static ConsistencyConfig from_key_values(const KeyValues& kv);
  void to_key_values(KeyValues& kv) const;
};

struct WarpResult {
  Image warped;
  Mask inbounds;
};

// warped(p) = target(p + flow(p)) sampled bilinearly (clamped at the border);
// inbounds(p) = 1 iff the landing point lies in [0, W-1] x [0, H-1].
WarpResult warp_backward(const Image& target, const FlowField& flow);

// M(p) = 1 iff the landing point is in frame and
// |fwd(p) + bwd(q)|^2 < alpha1 (|fwd(p)|^2 + |bwd(q)|^2) + alpha2, q = p + fwd(p).
Mask fb_consistency(const FlowField& fwd, const FlowField& bwd, const ConsistencyConfig& cfg);

Mask quad_confidence(const Mask& m_stereo, const Mask& m_temporal, const Mask& m_diagonal);
Mask tri_confidence(const Mask& m_first, const Mask& m_diagonal);

/// Forward-backward confidence of each of the 12 directed fields, in
/// kDirections order.
struct ConfidenceSet {
  std::array<Mask, kNumDirections> direction;

  const Mask& at(int from, int to) const { return direction[direction_index(from, to)]; }
  // M_aS * M_aT * M_aD for the group anchored at `anchor`.
  Mask quad(int anchor) const;
  // M_aS * M_aD (via stereo) or M_aT * M_aD (via temporal).
  Mask tri(int anchor, TriangleRoute route) const;

  static ConfidenceSet all_ones(Dims d);
};

ConfidenceSet bundle_confidence(const FlowBundle& bundle, const ConsistencyConfig& cfg);

}  // namespace quadflow
