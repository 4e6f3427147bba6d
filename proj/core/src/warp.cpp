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
#include "quadflow/warp.hpp"

#include <cmath>

namespace quadflow {

void ConsistencyConfig::validate() const {
  if (!(alpha1 >= 0.0) || !std::isfinite(alpha1)) throw ConfigError("consistency: alpha1 must be >= 0");
  if (!(alpha2 >= 0.0) || !std::isfinite(alpha2)) throw ConfigError("consistency: alpha2 must be >= 0");
}

ConsistencyConfig ConsistencyConfig::from_key_values(const KeyValues& kv) {
  ConsistencyConfig c;
  c.alpha1 = kv.get_double("alpha1", c.alpha1);
  c.alpha2 = kv.get_double("alpha2", c.alpha2);
  c.nearest_backward = kv.get_bool("nearest_backward", c.nearest_backward);
  c.validate();
  return c;
}

void ConsistencyConfig::to_key_values(KeyValues& kv) const {
  kv.set("alpha1", format_double(alpha1));
  kv.set("alpha2", format_double(alpha2));
  kv.set("nearest_backward", nearest_backward ? "true" : "false");
}

WarpResult warp_backward(const Image& target, const FlowField& flow) {
  require_same_dims(target.dims(), flow.dims(), "warp_backward");
  WarpResult r{Image(target.height(), target.width(), target.channels()), Mask(target.dims(), 0)};
  for (int y = 0; y < target.height(); ++y)
    for (int x = 0; x < target.width(); ++x) {
      const double qx = x + flow.u()(y, x);
      const double qy = y + flow.v()(y, x);
      for (int c = 0; c < target.channels(); ++c) r.warped(y, x, c) = bilinear_sample(target, qx, qy, c);
      r.inbounds(y, x) = in_bounds(target.dims(), qx, qy) ? 1 : 0;
    }
  return r;
}

Mask fb_consistency(const FlowField& fwd, const FlowField& bwd, const ConsistencyConfig& cfg) {
  require_same_dims(fwd.dims(), bwd.dims(), "fb_consistency");
  const Dims d = fwd.dims();
  Mask m(d, 0);
  for (int y = 0; y < d.height; ++y)
    for (int x = 0; x < d.width; ++x) {
      const double fu = fwd.u()(y, x), fv = fwd.v()(y, x);
      const double qx = x + fu, qy = y + fv;
      if (!in_bounds(d, qx, qy)) continue;
      double bu, bv;
      if (cfg.nearest_backward) {
        const int nx = static_cast<int>(std::floor(qx + 0.5)), ny = static_cast<int>(std::floor(qy + 0.5));
        bu = bwd.u()(ny, nx);
        bv = bwd.v()(ny, nx);
      } else {
        bu = bilinear(bwd.u(), qx, qy);
        bv = bilinear(bwd.v(), qx, qy);
      }
      const double su = fu + bu, sv = fv + bv;
      const double lhs = su * su + sv * sv;
      const double rhs = cfg.alpha1 * (fu * fu + fv * fv + bu * bu + bv * bv) + cfg.alpha2;
      m(y, x) = lhs < rhs ? 1 : 0;
    }
  return m;
}

Mask quad_confidence(const Mask& m_stereo, const Mask& m_temporal, const Mask& m_diagonal) {
  require_same_dims(m_stereo.dims(), m_temporal.dims(), "quad_confidence");
  require_same_dims(m_stereo.dims(), m_diagonal.dims(), "quad_confidence");
  return m_stereo & m_temporal & m_diagonal;
}

Mask tri_confidence(const Mask& m_first, const Mask& m_diagonal) {
  require_same_dims(m_first.dims(), m_diagonal.dims(), "tri_confidence");
  return m_first & m_diagonal;
}

Mask ConfidenceSet::quad(int anchor) const {
  const AnchorGroup g = anchor_group(anchor);
  return quad_confidence(at(g.anchor, g.stereo), at(g.anchor, g.temporal), at(g.anchor, g.diagonal));
}

Mask ConfidenceSet::tri(int anchor, TriangleRoute route) const {
  const AnchorGroup g = anchor_group(anchor);
  const int mid = route == TriangleRoute::kViaStereo ? g.stereo : g.temporal;
  return tri_confidence(at(g.anchor, mid), at(g.anchor, g.diagonal));
}

ConfidenceSet ConfidenceSet::all_ones(Dims d) {
  ConfidenceSet s;
  for (auto& m : s.direction) m = Mask::ones(d);
  return s;
}

ConfidenceSet bundle_confidence(const FlowBundle& bundle, const ConsistencyConfig& cfg) {
  ConfidenceSet s;
#pragma omp parallel for schedule(static)
  for (int k = 0; k < kNumDirections; ++k) {
    const Direction dir = kDirections[k];
    s.direction[k] = fb_consistency(bundle[k], bundle.at(dir.to, dir.from), cfg);
  }
  return s;
}

}  // namespace quadflow
