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
#include <benchmark/benchmark.h>

#include "quadflow/losses.hpp"
#include "quadflow/optimize.hpp"
#include "quadflow/scene.hpp"

namespace {

using namespace quadflow;

struct Fixture {
  QuadSet quadset;
  GroundTruth gt;

  static const Fixture& get() {
    static const Fixture f = [] {
      SceneConfig cfg;
      auto [q, g] = render_quadset(generate_scene(cfg.seed, cfg));
      return Fixture{std::move(q), std::move(g)};
    }();
    return f;
  }
};

void BM_Census(benchmark::State& state) {
  const Image& img = Fixture::get().quadset.image(1);
  const LossConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(census_descriptor(img, cfg));
}
BENCHMARK(BM_Census)->Unit(benchmark::kMillisecond);

void BM_PhotometricLossWithGradient(benchmark::State& state) {
  const Fixture& f = Fixture::get();
  const LossConfig cfg;
  const CensusField ref = census_descriptor(f.quadset.image(1), cfg);
  const FlowField& w = f.gt.bundle.at(1, 3);
  const Mask all = Mask::ones(w.dims());
  for (auto _ : state) {
    FlowField grad(w.dims());
    benchmark::DoNotOptimize(photometric_loss(ref, f.quadset.image(1), f.quadset.image(3), w, all, cfg, &grad));
  }
}
BENCHMARK(BM_PhotometricLossWithGradient)->Unit(benchmark::kMillisecond);

void BM_TeacherObjective(benchmark::State& state) {
  const Fixture& f = Fixture::get();
  const LossConfig cfg;
  const TeacherObjective objective(f.quadset.images, cfg);
  const ConfidenceSet conf = ConfidenceSet::all_ones(f.quadset.dims());
  for (auto _ : state) {
    FlowBundle grad(f.quadset.dims());
    FlowBundle curvature(f.quadset.dims());
    benchmark::DoNotOptimize(objective.evaluate(f.gt.bundle, conf, &grad, &curvature));
  }
}
BENCHMARK(BM_TeacherObjective)->Unit(benchmark::kMillisecond);

void BM_QuadTriLoss(benchmark::State& state) {
  const Fixture& f = Fixture::get();
  const LossConfig cfg;
  const ConfidenceSet conf = ConfidenceSet::all_ones(f.quadset.dims());
  for (auto _ : state) {
    FlowBundle grad(f.quadset.dims());
    benchmark::DoNotOptimize(quad_loss(f.gt.bundle, conf, cfg, &grad));
    benchmark::DoNotOptimize(tri_loss(f.gt.bundle, conf, cfg, &grad));
  }
}
BENCHMARK(BM_QuadTriLoss)->Unit(benchmark::kMillisecond);

void BM_BlockMatchCoarseToFine(benchmark::State& state) {
  const Fixture& f = Fixture::get();
  const LossConfig cfg;
  const auto from = build_pyramid(f.quadset.image(1), 4);
  const auto to = build_pyramid(f.quadset.image(3), 4);
  for (auto _ : state) benchmark::DoNotOptimize(match_coarse_to_fine(from, to, 16.0, true, 2, cfg));
}
BENCHMARK(BM_BlockMatchCoarseToFine)->Unit(benchmark::kMillisecond);

void BM_BundleConfidence(benchmark::State& state) {
  const Fixture& f = Fixture::get();
  const ConsistencyConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(bundle_confidence(f.gt.bundle, cfg));
}
BENCHMARK(BM_BundleConfidence)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
