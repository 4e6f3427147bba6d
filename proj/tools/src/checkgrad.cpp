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
#include "checkgrad.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "quadflow/losses.hpp"
#include "quadflow/random.hpp"
#include "quadflow/warp.hpp"

namespace quadflow::cli {
namespace {

constexpr Dims kDims{16, 16};

// Integer plus a fraction kept away from the bilinear kinks.
double off_lattice(Rng& rng, double range) {
  return std::floor(rng.uniform(-range, range)) + rng.uniform(0.05, 0.95);
}

FlowBundle random_bundle(Rng& rng) {
  FlowBundle b(kDims, true);
  for (int k = 0; k < kNumDirections; ++k)
    for (int c = 0; c < 2; ++c)
      for (double& v : b[k].component(c).values()) v = off_lattice(rng, 3.0);
  b.enforce_rectification();
  return b;
}

Mask random_mask(Rng& rng) {
  Mask m(kDims, 0);
  for (auto& v : m.values()) v = rng.uniform() < 0.8 ? 1 : 0;
  return m;
}

using Objective = std::function<double(const FlowBundle&, FlowBundle*)>;

double max_error(const Objective& f, const FlowBundle& x, Rng& rng, int coords, std::size_t& checked) {
  FlowBundle g(x.dims(), x.rectified());
  f(x, &g);
  double worst = 0.0;
  constexpr double h = 1e-6;
  for (int n = 0; n < coords; ++n) {
    const int k = static_cast<int>(rng.uniform_int(0, kNumDirections - 1));
    int c = static_cast<int>(rng.uniform_int(0, 1));
    if (is_stereo_pair(kDirections[k].from, kDirections[k].to)) c = 0;
    const auto i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(kDims.area()) - 1));
    FlowBundle p = x, m = x;
    p[k].component(c).values()[i] += h;
    m[k].component(c).values()[i] -= h;
    const double fd = (f(p, nullptr) - f(m, nullptr)) / (2.0 * h);
    const double a = g[k].component(c).values()[i];
    worst = std::max(worst, std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-3}));
    ++checked;
  }
  return worst;
}

}  // namespace

std::vector<GradCheckRow> run_gradient_check(int instances, std::uint64_t seed, int coordinates_per_instance) {
  std::vector<GradCheckRow> rows{{"lp"}, {"lq"}, {"lt"}, {"ls"}, {"smoothness"}};
  LossConfig cfg;
  cfg.triangle_routes = {TriangleRoute::kViaStereo, TriangleRoute::kViaTemporal};
  for (int n = 0; n < instances; ++n) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(n)));
    std::array<Image, kNumViews> images;
    for (Image& img : images) {
      img = Image(kDims.height, kDims.width, 1);
      for (double& v : img.values()) v = rng.uniform();
    }
    const FlowBundle x = random_bundle(rng);
    const FlowBundle teacher = random_bundle(rng);
    ConfidenceSet conf;
    std::array<Mask, kNumDirections> label_masks;
    for (int k = 0; k < kNumDirections; ++k) {
      conf.direction[k] = random_mask(rng);
      label_masks[k] = random_mask(rng);
    }
    const TeacherObjective lp(images, cfg, TermToggles{true, false, false});

    const std::array<Objective, 5> objectives{
        [&](const FlowBundle& b, FlowBundle* g) { return *lp.evaluate(b, conf, g).lp; },
        [&](const FlowBundle& b, FlowBundle* g) { return quad_loss(b, conf, cfg, g).value; },
        [&](const FlowBundle& b, FlowBundle* g) { return tri_loss(b, conf, cfg, g).value; },
        [&](const FlowBundle& b, FlowBundle* g) { return selfsup_loss(b, teacher, label_masks, cfg, g).value; },
        [&](const FlowBundle& b, FlowBundle* g) { return smoothness_loss(b, cfg, g); },
    };
    for (std::size_t t = 0; t < objectives.size(); ++t)
      rows[t].max_relative_error = std::max(
          rows[t].max_relative_error, max_error(objectives[t], x, rng, coordinates_per_instance, rows[t].checked));
  }
  return rows;
}

}  // namespace quadflow::cli
