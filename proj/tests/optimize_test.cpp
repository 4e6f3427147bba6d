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
#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "quadflow/optimize.hpp"
#include "quadflow/random.hpp"
#include "quadflow/selfsup.hpp"

namespace quadflow {
namespace {

const double kPsi0 = std::pow(0.01, 0.4);
const double kPsi1 = std::pow(1.01, 0.4);

SceneConfig small_scene(bool moving = true) {
  SceneConfig c;
  c.width = 64;
  c.height = 48;
  c.patches = 2;
  if (!moving) {
    c.dx_max = 0.0;
    c.dy_max = 0.0;
    c.background_motion = false;
  }
  return c;
}

std::pair<QuadSet, GroundTruth> render(std::uint64_t seed, const SceneConfig& c) {
  return render_quadset(generate_scene(seed, c));
}

SolverConfig quick_solver(int iterations) {
  SolverConfig s;
  s.iterations = iterations;
  return s;
}

// Objective with fixed confidence maps, as the solver sees it at one level.
struct FixedProblem {
  std::shared_ptr<TeacherObjective> objective;
  ConfidenceSet conf;
  double lambda_s = 0.05;
  LossConfig loss;

  LossReport operator()(const FlowBundle& b, FlowBundle* grad, FlowBundle* curv) const {
    LossReport r = objective->evaluate(b, conf, grad, curv);
    FlowBundle sg, sc;
    if (grad) sg = FlowBundle(b.dims(), b.rectified());
    if (curv) sc = FlowBundle(b.dims(), b.rectified());
    r.smoothness = smoothness_loss(b, loss, grad ? &sg : nullptr, curv ? &sc : nullptr);
    if (grad) add_scaled(*grad, sg, lambda_s);
    if (curv) add_scaled(*curv, sc, lambda_s);
    r.objective = r.total + lambda_s * *r.smoothness;
    return r;
  }
};

double full_objective(const QuadSet& qs, const FlowBundle& b, const ConfidenceSet& conf) {
  FixedProblem p{std::make_shared<TeacherObjective>(qs.images, LossConfig{}), conf};
  return p(b, nullptr, nullptr).objective;
}

TEST(Smoothness, ConstantFlowSitsAtTheFloor) {
  const int h = 9, w = 13;
  const FlowField f(h, w, 2.5, -1.0);
  const double diffs = h * (w - 1) + (h - 1) * w;
  EXPECT_NEAR(smoothness_loss(f, LossConfig{}), 2.0 * kPsi0 * diffs / (2.0 * h * w), 1e-12);
}

TEST(Smoothness, HorizontalRamp) {
  const int h = 6, w = 10;
  FlowField f(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) f.u()(y, x) = x;
  const double horiz = h * (w - 1), vert = (h - 1) * w;
  const double expected = (horiz * kPsi1 + vert * kPsi0 + (horiz + vert) * kPsi0) / (2.0 * h * w);
  EXPECT_NEAR(smoothness_loss(f, LossConfig{}), expected, 1e-12);
}

TEST(SolverConfig, Validation) {
  SolverConfig ok;
  EXPECT_NO_THROW(ok.validate());
  auto bad = [](auto edit) {
    SolverConfig c;
    edit(c);
    EXPECT_THROW(c.validate(), ConfigError);
  };
  bad([](SolverConfig& c) { c.pyramid_levels = 0; });
  bad([](SolverConfig& c) { c.iterations = -1; });
  bad([](SolverConfig& c) { c.step = 0.0; });
  bad([](SolverConfig& c) { c.step_shrink = 1.0; });
  bad([](SolverConfig& c) { c.lambda_s = -0.1; });
  bad([](SolverConfig& c) { c.refresh_interval = 0; });
  bad([](SolverConfig& c) { c.init_noise = -1.0; });
}

TEST(SolverConfig, KeyValueRoundTrip) {
  SolverConfig c;
  c.iterations = 17;
  c.lambda_s = 0.125;
  c.match_init = false;
  c.init_seed = 99;
  KeyValues kv;
  c.to_key_values(kv);
  const SolverConfig back = SolverConfig::from_key_values(kv);
  EXPECT_EQ(back.iterations, 17);
  EXPECT_EQ(back.lambda_s, 0.125);
  EXPECT_FALSE(back.match_init);
  EXPECT_EQ(back.init_seed, 99u);
}

TEST(Solver, UsableLevelsStopAtTheCensusWindow) {
  EXPECT_EQ(usable_levels({64, 128}, 4, 7), 4);
  EXPECT_EQ(usable_levels({32, 32}, 4, 7), 3);  // 8x8, then 4x4 would be too small
  EXPECT_EQ(usable_levels({8, 8}, 4, 7), 1);
  EXPECT_EQ(usable_levels({64, 128}, 1, 7), 1);
}

TEST(BlockMatch, RecoversAnIntegerShift) {
  const auto [qs, gt] = render(7, small_scene(false));
  const Image& a = qs.image(1);
  // b(y, x) = a(y - 2, x + 3), so a(y, x) reappears at (x - 3, y + 2).
  Image b(a.height(), a.width());
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x)
      b(y, x) = a(std::clamp(y - 2, 0, a.height() - 1), std::clamp(x + 3, 0, a.width() - 1));
  MatchOptions o;
  o.radius_u = 5;
  o.radius_v = 5;
  const FlowField f = block_match(a, b, o, LossConfig{});
  int good = 0, total = 0;
  for (int y = 8; y < a.height() - 8; ++y)
    for (int x = 8; x < a.width() - 8; ++x) {
      ++total;
      if (f.u()(y, x) == -3.0 && f.v()(y, x) == 2.0) ++good;
    }
  EXPECT_GT(static_cast<double>(good) / total, 0.95);

  MatchOptions neg;
  neg.radius_u = -1;
  EXPECT_THROW(block_match(a, b, neg, LossConfig{}), std::invalid_argument);
}

TEST(BlockMatch, CoarseToFineReachesLargeShifts) {
  const auto [qs, gt] = render(7, small_scene(false));
  const Image& a = qs.image(1);
  Image b(a.height(), a.width());
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) b(y, x) = a(y, std::clamp(x + 9, 0, a.width() - 1));
  const FlowField f = match_coarse_to_fine(build_pyramid(a, 3), build_pyramid(b, 3), 12.0, false, 2, LossConfig{});
  int good = 0, total = 0;
  for (int y = 8; y < a.height() - 8; ++y)
    for (int x = 8; x < a.width() - 20; ++x) {
      ++total;
      if (std::abs(f.u()(y, x) + 9.0) < 0.5 && f.v()(y, x) == 0.0) ++good;
    }
  EXPECT_GT(static_cast<double>(good) / total, 0.9);
}

TEST(Solver, StaticSceneFindsZeroMotion) {
  const auto [qs, gt] = render(7, small_scene(false));
  const TeacherResult r = solve_teacher(qs, SolverConfig{}, LossConfig{}, ConsistencyConfig{});
  const auto m = evaluate_field(r.bundle, gt, direction_index(1, 3));
  ASSERT_TRUE(m.epe_all());
  EXPECT_LT(*m.epe_all(), 0.2);
}

TEST(Solver, GroundTruthInitialisation) {
  const auto [qs, gt] = render(7, small_scene());
  SolverConfig s = quick_solver(100);
  for (int interval : {25, 1000}) {
    s.refresh_interval = interval;
    const TeacherResult r = solve_teacher(qs, s, LossConfig{}, ConsistencyConfig{}, {}, &gt.bundle);
    ASSERT_FALSE(r.trace.empty());
    // A refresh swaps the maps and with them the objective; rows are compared
    // only when no refresh happened between them.
    for (std::size_t i = 1; i < r.trace.size(); ++i) {
      const int prev = r.trace[i - 1].iteration;
      if (prev > 0 && prev % interval == 0) continue;
      EXPECT_LE(r.trace[i].objective, r.trace[i - 1].objective) << "interval " << interval << " row " << i;
    }
    // The start is exact, so the solver may only drift by a fraction of a pixel.
    EXPECT_LT(*evaluate_bundle(r.bundle, gt).epe_noc(), 0.1);
  }
}

TEST(Solver, NoisyGroundTruthInitialisationDoesNotGetWorse) {
  const auto [qs, gt] = render(11, small_scene());
  FlowBundle init = gt.bundle;
  Rng rng(5);
  for (int k = 0; k < kNumDirections; ++k)
    for (int c = 0; c < 2; ++c)
      for (double& v : init[k].component(c).values()) v += rng.uniform(-0.4, 0.4);
  init.enforce_rectification();
  const double before = *evaluate_bundle(init, gt).epe_noc();
  const TeacherResult r = solve_teacher(qs, quick_solver(100), LossConfig{}, ConsistencyConfig{}, {}, &init);
  EXPECT_LE(*evaluate_bundle(r.bundle, gt).epe_noc(), before);
}

TEST(Solver, Deterministic) {
  const auto [qs, gt] = render(3, small_scene());
  const SolverConfig s = quick_solver(30);
  const TeacherResult a = solve_teacher(qs, s, LossConfig{}, ConsistencyConfig{});
  const TeacherResult b = solve_teacher(qs, s, LossConfig{}, ConsistencyConfig{});
  EXPECT_TRUE(a.bundle == b.bundle);
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) EXPECT_EQ(a.trace[i].objective, b.trace[i].objective);
}

// Property: with the maps held fixed every accepted step lowers the objective,
// from zero and from noisy starts, with and without preconditioning.
TEST(Solver, MonotoneWithFixedMaps) {
  for (std::uint64_t seed : {21u, 22u, 23u}) {
    const auto [qs, gt] = render(seed, small_scene());
    for (bool precondition : {true, false}) {
      SolverConfig s = quick_solver(40);
      s.precondition = precondition;
      s.init_noise = seed == 23u ? 1.0 : 0.0;
      s.init_seed = seed;
      const ConfidenceSet conf = bundle_confidence(gt.bundle, ConsistencyConfig{});
      auto make_level = [&](int, Dims) {
        LevelProblem p;
        p.evaluate = FixedProblem{std::make_shared<TeacherObjective>(qs.images, LossConfig{}), conf};
        return p;
      };
      DescentOptions o;
      std::vector<LossReport> trace;
      descend_coarse_to_fine(qs.dims(), s, o, make_level, &trace);
      ASSERT_GT(trace.size(), 1u);
      for (std::size_t i = 1; i < trace.size(); ++i)
        EXPECT_LE(trace[i].objective, trace[i - 1].objective) << "seed " << seed << " row " << i;
      EXPECT_LT(trace.back().objective, trace.front().objective);
    }
  }
}

TEST(Solver, PyramidWarmStartBeatsZero) {
  for (std::uint64_t seed : {31u, 32u}) {
    SceneConfig c = small_scene();
    c.width = 96;
    c.height = 64;
    const auto [qs, gt] = render(seed, c);
    ProxyTransform half = ProxyTransform::identity(qs.dims());
    half.scale = 2;
    const QuadSet coarse = apply_proxy(qs, half);
    const TeacherResult r = solve_teacher(coarse, quick_solver(60), LossConfig{}, ConsistencyConfig{});
    const FlowBundle warm = upsample_bundle(r.bundle, qs.dims());
    const FlowBundle zero(qs.dims(), true);
    const ConfidenceSet conf = bundle_confidence(warm, ConsistencyConfig{});
    EXPECT_LT(full_objective(qs, warm, conf), full_objective(qs, zero, conf)) << "seed " << seed;
  }
}

TEST(Solver, RefreshSeesOnlyTheCurrentFlow) {
  const auto [qs, gt] = render(7, small_scene());
  SolverConfig s = quick_solver(60);
  s.refresh_interval = 10;
  s.tolerance = 0.0;
  std::vector<FlowBundle> seen;
  ConfidenceSet conf = ConfidenceSet::all_ones(qs.dims());
  auto objective = std::make_shared<TeacherObjective>(qs.images, LossConfig{});
  auto make_level = [&](int, Dims) {
    LevelProblem p;
    p.evaluate = [&](const FlowBundle& b, FlowBundle* g, FlowBundle* h) {
      return FixedProblem{objective, conf}(b, g, h);
    };
    p.refresh = [&](const FlowBundle& b) {
      seen.push_back(b);
      conf = bundle_confidence(b, ConsistencyConfig{});
    };
    return p;
  };
  DescentOptions o;
  o.init = &gt.bundle;
  std::vector<LossReport> trace;
  descend_coarse_to_fine(qs.dims(), s, o, make_level, &trace);
  ASSERT_FALSE(seen.empty());
  EXPECT_TRUE(seen.front() == gt.bundle);
  const int iterations = trace.back().iteration;
  EXPECT_GE(static_cast<int>(seen.size()), 1 + (iterations - 1) / s.refresh_interval);
  EXPECT_LE(static_cast<int>(seen.size()), 1 + iterations / s.refresh_interval);
  // Maps are a pure function of the flow values.
  for (const FlowBundle& b : seen) {
    const ConfidenceSet a = bundle_confidence(b, ConsistencyConfig{});
    const ConfidenceSet c = bundle_confidence(b, ConsistencyConfig{});
    for (int k = 0; k < kNumDirections; ++k) EXPECT_TRUE(a.direction[k] == c.direction[k]);
  }
}

TEST(Solver, NonFiniteObjectiveRaises) {
  auto make_level = [](int, Dims) {
    LevelProblem p;
    p.evaluate = [](const FlowBundle&, FlowBundle*, FlowBundle*) {
      LossReport r;
      r.objective = std::nan("");
      return r;
    };
    return p;
  };
  EXPECT_THROW(descend_coarse_to_fine({16, 16}, SolverConfig{}, DescentOptions{}, make_level), NumericError);
}

TEST(Solver, EvaluateBundleAtGroundTruthIsZero) {
  const auto [qs, gt] = render(7, small_scene());
  const auto m = evaluate_bundle(gt.bundle, gt);
  EXPECT_EQ(*m.epe_all(), 0.0);
  EXPECT_EQ(*m.noc.outlier, 0.0);
}

TEST(Ablation, RejectsSetsWithoutPhotometric) {
  const auto [qs, gt] = render(7, small_scene());
  TermToggles no_lp;
  no_lp.lp = false;
  EXPECT_THROW(ablate(qs, gt, {TermToggles{}, no_lp}, quick_solver(1), LossConfig{}, ConsistencyConfig{}),
               std::invalid_argument);
}

TEST(Ablation, StaticSceneTogglesAgree) {
  const auto [qs, gt] = render(9, small_scene(false));
  TermToggles lp_only{true, false, false};
  const auto rows = ablate(qs, gt, {lp_only, TermToggles{}}, quick_solver(80), LossConfig{}, ConsistencyConfig{});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_NEAR(*rows[0].metrics.epe_all(), *rows[1].metrics.epe_all(), 0.05);
  const std::string table = format_ablation_table(rows);
  EXPECT_NE(table.find("EPE-noc"), std::string::npos);
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 3);
}

}  // namespace
}  // namespace quadflow
