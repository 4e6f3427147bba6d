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

#include "quadflow/random.hpp"
#include "quadflow/selfsup.hpp"

namespace quadflow {
namespace {

std::pair<QuadSet, GroundTruth> render(std::uint64_t seed, int width = 128, int height = 80) {
  SceneConfig c;
  c.width = width;
  c.height = height;
  return render_quadset(generate_scene(seed, c));
}

ProxyTransform crop(int x0, int y0, int w, int h, int scale = 1) {
  ProxyTransform t;
  t.x0 = x0;
  t.y0 = y0;
  t.width = w;
  t.height = h;
  t.scale = scale;
  return t;
}

FlowField random_field(Dims d, std::uint64_t seed, double amp = 4.0) {
  Rng rng(seed);
  FlowField f(d);
  for (int c = 0; c < 2; ++c)
    for (double& v : f.component(c).values()) v = rng.uniform(-amp, amp);
  return f;
}

Mask random_mask(Dims d, std::uint64_t seed) {
  Rng rng(seed);
  Mask m(d, 0);
  for (auto& v : m.values()) v = rng.uniform() < 0.7 ? 1 : 0;
  return m;
}

TEST(ProxyTransform, CropCoordinateMap) {
  const ProxyTransform t = crop(10, 10, 100, 60);
  EXPECT_NO_THROW(t.validate({80, 128}));
  EXPECT_EQ(t.proxy_dims(), (Dims{60, 100}));
  const Point2 o = t.to_original({0, 0});
  EXPECT_EQ(o.x, 10.0);
  EXPECT_EQ(o.y, 10.0);

  const ProxyTransform s = crop(4, 6, 64, 40, 2);
  const Point2 c = s.to_original({0, 0});
  EXPECT_DOUBLE_EQ(c.x, 4.5);  // centre of the 2x2 block at (4..5, 6..7)
  EXPECT_DOUBLE_EQ(c.y, 6.5);
  const Point2 back = s.to_proxy(s.to_original({3.25, 7.5}));
  EXPECT_DOUBLE_EQ(back.x, 3.25);
  EXPECT_DOUBLE_EQ(back.y, 7.5);
}

TEST(ProxyTransform, Validation) {
  const Dims d{80, 128};
  EXPECT_THROW(crop(100, 0, 40, 40).validate(d), std::invalid_argument);
  EXPECT_THROW(crop(-1, 0, 40, 40).validate(d), std::invalid_argument);
  EXPECT_THROW(crop(0, 0, 31, 40).validate(d), std::invalid_argument);
  EXPECT_THROW(crop(0, 0, 41, 40, 2).validate(d), std::invalid_argument);
  EXPECT_THROW(crop(0, 0, 40, 40, 3).validate(d), std::invalid_argument);
  ProxyTransform t = crop(0, 0, 40, 40);
  t.noise_views = {5};
  EXPECT_THROW(t.validate(d), std::invalid_argument);
  EXPECT_THROW(sample_proxy_transform({20, 100}, 1, ProxyConfig{}), std::invalid_argument);
}

TEST(ProxyTransform, ComposeMatchesSequentialMaps) {
  const ProxyTransform first = crop(0, 0, 128, 80, 2);  // scale 2 over the whole image
  const ProxyTransform second = crop(6, 4, 40, 32);     // crop on the 40x64 proxy grid
  const ProxyTransform both = compose(first, second);
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const Point2 p{rng.uniform(0, 39), rng.uniform(0, 31)};
    const Point2 a = both.to_original(p);
    const Point2 b = first.to_original(second.to_original(p));
    EXPECT_DOUBLE_EQ(a.x, b.x);
    EXPECT_DOUBLE_EQ(a.y, b.y);
  }
  const auto [qs, gt] = render(7);
  const QuadSet seq = apply_proxy(apply_proxy(qs, first), second);
  const QuadSet one = apply_proxy(qs, both);
  for (int v = 1; v <= kNumViews; ++v) EXPECT_TRUE(seq.image(v) == one.image(v)) << v;
  EXPECT_THROW(compose(first, crop(0, 0, 32, 32, 2)), std::invalid_argument);
}

TEST(Proxy, IdentityConfigReturnsTheOriginal) {
  const auto [qs, gt] = render(7);
  const ProxySample s = make_proxy(qs, 42, ProxyConfig::identity());
  EXPECT_EQ(s.transform.x0, 0);
  EXPECT_EQ(s.transform.y0, 0);
  EXPECT_EQ(s.transform.proxy_dims(), qs.dims());
  for (int v = 1; v <= kNumViews; ++v) EXPECT_TRUE(s.quadset.image(v) == qs.image(v));
  EXPECT_EQ(s.quadset.rig.f_prime, qs.rig.f_prime);
  EXPECT_EQ(s.quadset.rig.cx, qs.rig.cx);
}

TEST(Proxy, NoiseOnlyOnDesignatedViewsAndDeterministic) {
  const auto [qs, gt] = render(7);
  ProxyConfig cfg;
  cfg.noise_amplitude = 0.04;
  cfg.noise_views = {3, 4};
  const ProxySample a = make_proxy(qs, 5, cfg);
  const ProxySample b = make_proxy(qs, 5, cfg);
  const ProxyTransform& t = a.transform;
  ProxyTransform clean = t;
  clean.noise = 0.0;
  const QuadSet plain = apply_proxy(qs, clean);
  for (int v = 1; v <= kNumViews; ++v) {
    EXPECT_TRUE(a.quadset.image(v) == b.quadset.image(v));
    const bool noisy = v >= 3;
    EXPECT_EQ(a.quadset.image(v) == plain.image(v), !noisy) << v;
    const auto n = a.quadset.image(v).values();
    const auto p = plain.image(v).values();
    for (std::size_t i = 0; i < n.size(); ++i) ASSERT_LE(std::abs(n[i] - p[i]), 0.04 + 1e-12);
  }
  EXPECT_FALSE(make_proxy(qs, 6, cfg).quadset.image(3) == a.quadset.image(3));
}

TEST(Proxy, RigFollowsTheCoordinateMap) {
  const auto [qs, gt] = render(7);
  const ProxyTransform t = crop(10, 8, 96, 64, 2);
  const QuadSet p = apply_proxy(qs, t);
  EXPECT_EQ(p.dims(), (Dims{32, 48}));
  EXPECT_DOUBLE_EQ(p.rig.f_prime, qs.rig.f_prime / 2);
  const Point2 c = t.to_proxy({qs.rig.cx, qs.rig.cy});
  EXPECT_DOUBLE_EQ(p.rig.cx, c.x);
  EXPECT_DOUBLE_EQ(p.rig.cy, c.y);
  // The box-downsampled crop.
  EXPECT_DOUBLE_EQ(p.image(1)(0, 0),
                   0.25 * (qs.image(1)(8, 10) + qs.image(1)(8, 11) + qs.image(1)(9, 10) + qs.image(1)(9, 11)));
}

TEST(Transport, IdentityIsANoOp) {
  const Dims d{40, 48};
  const FlowField w = random_field(d, 1);
  const Mask m = random_mask(d, 2);
  const Labels l = transport_labels(w, m, ProxyTransform::identity(d));
  EXPECT_TRUE(l.flow == w);
  EXPECT_TRUE(l.mask == m);
}

TEST(Transport, CropKeepsValues) {
  const Dims d{80, 128};
  const FlowField w = random_field(d, 3);
  const Mask m = random_mask(d, 4);
  const ProxyTransform t = crop(10, 10, 100, 60);
  const Labels l = transport_labels(w, m, t);
  ASSERT_EQ(l.flow.dims(), (Dims{60, 100}));
  for (int y = 0; y < 60; ++y)
    for (int x = 0; x < 100; ++x) {
      ASSERT_EQ(l.flow.u()(y, x), w.u()(y + 10, x + 10));
      ASSERT_EQ(l.flow.v()(y, x), w.v()(y + 10, x + 10));
      ASSERT_EQ(l.mask(y, x), m(y + 10, x + 10));
    }
}

TEST(Transport, ScaleTwoHalvesTheVectors) {
  // Affine fields are reproduced exactly by bilinear reads.
  const Dims d{64, 96};
  FlowField w(d);
  for (int y = 0; y < d.height; ++y)
    for (int x = 0; x < d.width; ++x) {
      w.u()(y, x) = 0.1 * x - 0.05 * y + 2.0;
      w.v()(y, x) = -0.02 * x + 0.03 * y - 1.0;
    }
  const ProxyTransform t = crop(8, 4, 64, 48, 2);
  const Labels l = transport_labels(w, Mask::ones(d), t);
  ASSERT_EQ(l.flow.dims(), (Dims{24, 32}));
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 32; ++x) {
      const double ox = 8 + 2 * x + 0.5, oy = 4 + 2 * y + 0.5;
      EXPECT_NEAR(l.flow.u()(y, x), (0.1 * ox - 0.05 * oy + 2.0) / 2, 1e-12);
      EXPECT_NEAR(l.flow.v()(y, x), (-0.02 * ox + 0.03 * oy - 1.0) / 2, 1e-12);
    }
}

// Property: transported magnitudes scale by exactly 1/s on every axis.
TEST(Transport, ScaleCovariance) {
  const Dims d{64, 96};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const FlowField w = random_field(d, seed);
    FlowField w3 = w;
    for (int c = 0; c < 2; ++c)
      for (double& v : w3.component(c).values()) v *= 3.0;
    for (int scale : {1, 2}) {
      const ProxyTransform t = crop(2 * static_cast<int>(seed), 4, 64, 48, scale);
      const Labels a = transport_labels(w, Mask::ones(d), t);
      const Labels b = transport_labels(w3, Mask::ones(d), t);
      for (int c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < a.flow.u().size(); ++i)
          ASSERT_NEAR(b.flow.component(c).values()[i], 3.0 * a.flow.component(c).values()[i], 1e-12);
    }
    const FlowField constant(d, 3.0, -5.0);
    const Labels c = transport_labels(constant, Mask::ones(d), crop(0, 0, 64, 48, 2));
    for (double v : c.flow.u().values()) ASSERT_EQ(v, 1.5);
    for (double v : c.flow.v().values()) ASSERT_EQ(v, -2.5);
  }
}

// Property: lattice-aligned transport and back is the identity on the crop.
TEST(Transport, RoundTripOnLatticeCrops) {
  const Dims d{80, 128};
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const FlowField w = random_field(d, 100 + trial);
    const Mask m = random_mask(d, 200 + trial);
    const int cw = static_cast<int>(rng.uniform_int(32, 128)), ch = static_cast<int>(rng.uniform_int(32, 80));
    const ProxyTransform t =
        crop(static_cast<int>(rng.uniform_int(0, 128 - cw)), static_cast<int>(rng.uniform_int(0, 80 - ch)), cw, ch);
    const Labels fwd = transport_labels(w, m, t);
    const Labels back = untransport_labels(fwd.flow, fwd.mask, t, d);
    for (int y = 0; y < d.height; ++y)
      for (int x = 0; x < d.width; ++x) {
        const bool inside = x >= t.x0 && x < t.x0 + cw && y >= t.y0 && y < t.y0 + ch;
        if (inside) {
          ASSERT_EQ(back.flow.u()(y, x), w.u()(y, x));
          ASSERT_EQ(back.flow.v()(y, x), w.v()(y, x));
          ASSERT_EQ(back.mask(y, x), m(y, x));
        } else {
          ASSERT_EQ(back.mask(y, x), 0);
        }
      }
  }
}

TEST(Transport, CropOccludedCountsOutOfViewLandings) {
  // Every field moves 5 px right; a 48-wide crop loses its last 5 columns.
  const Dims d{40, 64};
  GroundTruth gt;
  gt.bundle = FlowBundle(d, false);
  for (int k = 0; k < kNumDirections; ++k) {
    gt.bundle[k] = FlowField(d, 5.0, 0.0);
    gt.covisible[k] = Mask::ones(d);
  }
  const auto occ = crop_occluded(gt, crop(0, 0, 48, 40));
  for (int k = 0; k < kNumDirections; ++k) {
    EXPECT_EQ(occ[k].count(), 5u * 40u);
    EXPECT_EQ(occ[k](10, 43), 1);
    EXPECT_EQ(occ[k](10, 42), 0);
  }
  gt.covisible[0] = Mask(d, 0);
  EXPECT_EQ(crop_occluded(gt, crop(0, 0, 48, 40))[0].count(), 0u);
}

TEST(Variants, ParseAndName) {
  for (const char* tag : {"v1", "v2", "v3", "v4"}) EXPECT_EQ(to_string(parse_selfsup_variant(tag)), tag);
  EXPECT_THROW(parse_selfsup_variant("v5"), ConfigError);
  EXPECT_THROW(parse_selfsup_variant(""), ConfigError);
}

TEST(Variants, Plans) {
  const Dims d{80, 128};
  SelfsupConfig cfg;
  cfg.proxy_count = 5;
  cfg.proxy_seed = 11;
  const VariantPlan v1 = selfsup_variant(SelfsupVariant::kV1, d, cfg);
  const VariantPlan v2 = selfsup_variant(SelfsupVariant::kV2, d, cfg);
  const VariantPlan v3 = selfsup_variant(SelfsupVariant::kV3, d, cfg);
  const VariantPlan v4 = selfsup_variant(SelfsupVariant::kV4, d, cfg);
  EXPECT_TRUE(v1.gate_occlusion);
  EXPECT_FALSE(v2.gate_occlusion);
  EXPECT_FALSE(v3.gate_occlusion);
  EXPECT_TRUE(v4.geometric);
  EXPECT_FALSE(v3.geometric);
  for (const VariantPlan* p : {&v1, &v2}) {
    ASSERT_EQ(p->schedule.size(), 1u);
    EXPECT_EQ(p->schedule[0].scale, 1);
    EXPECT_EQ(p->schedule[0].noise, 0.0);
  }
  ASSERT_EQ(v3.schedule.size(), 5u);
  for (const ProxyTransform& t : v3.schedule) {
    EXPECT_EQ(t.scale, 2);
    EXPECT_GT(t.noise, 0.0);
    EXPECT_FALSE(t.noise_views.empty());
    EXPECT_LT(t.width * t.height, d.area());
    EXPECT_NO_THROW(t.validate(d));
  }
  const VariantPlan again = selfsup_variant(SelfsupVariant::kV3, d, cfg);
  for (std::size_t i = 0; i < v3.schedule.size(); ++i) {
    EXPECT_EQ(again.schedule[i].x0, v3.schedule[i].x0);
    EXPECT_EQ(again.schedule[i].seed, v3.schedule[i].seed);
  }
}

TEST(SelfsupConfig, ValidationAndRoundTrip) {
  SelfsupConfig c;
  c.variant = SelfsupVariant::kV3;
  c.proxy_count = 3;
  c.proxy_seed = 77;
  c.proxy.noise_views = {2, 4};
  KeyValues kv;
  c.to_key_values(kv);
  const SelfsupConfig back = SelfsupConfig::from_key_values(kv);
  EXPECT_EQ(back.variant, SelfsupVariant::kV3);
  EXPECT_EQ(back.proxy_count, 3);
  EXPECT_EQ(back.proxy_seed, 77u);
  EXPECT_EQ(back.proxy.noise_views, (std::vector<int>{2, 4}));

  SelfsupConfig bad;
  bad.proxy_count = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  ProxyConfig p;
  p.crop_min_fraction = 0.95;
  EXPECT_THROW(p.validate(), ConfigError);
}

SelfsupConfig full_crop() {
  SelfsupConfig c;
  c.proxy.crop_min_fraction = 1.0;
  c.proxy.crop_max_fraction = 1.0;
  return c;
}

TEST(Student, V2WithIdentityProxyIsPlainDistillation) {
  const auto [qs, gt] = render(7, 64, 48);
  const ConfidenceSet conf = bundle_confidence(gt.bundle, ConsistencyConfig{});
  const VariantPlan plan = selfsup_variant(SelfsupVariant::kV2, qs.dims(), full_crop());
  const auto proxies = prepare_student(plan, gt.bundle, conf, ConsistencyConfig{});
  ASSERT_EQ(proxies.size(), 1u);
  EXPECT_TRUE(proxies[0].labels.flows == gt.bundle);
  for (int k = 0; k < kNumDirections; ++k) EXPECT_TRUE(proxies[0].labels.masks[k] == conf.direction[k]);

  const VariantPlan p1 = selfsup_variant(SelfsupVariant::kV1, qs.dims(), full_crop());
  const auto gated = prepare_student(p1, gt.bundle, conf, ConsistencyConfig{});
  for (int k = 0; k < kNumDirections; ++k)
    EXPECT_EQ((gated[0].labels.masks[k] & proxies[0].labels.masks[k]).count(), gated[0].labels.masks[k].count());
}

TEST(Student, EmptyLabelsAreRejected) {
  const Dims d{40, 48};
  StudentProxy p{ProxyTransform::identity(d), {FlowBundle(d), {}}};
  for (auto& m : p.labels.masks) m = Mask(d, 0);
  EXPECT_THROW(solve_student({p}, d, SolverConfig{}, LossConfig{}), std::invalid_argument);
  EXPECT_THROW(solve_student({}, d, SolverConfig{}, LossConfig{}), std::invalid_argument);
}

TEST(Student, RegressesGroundTruthLabels) {
  const auto [qs, gt] = render(7, 64, 48);
  StudentProxy p{ProxyTransform::identity(qs.dims()), {gt.bundle, {}}};
  for (auto& m : p.labels.masks) m = Mask::ones(qs.dims());
  const StudentResult r = solve_student({p}, qs.dims(), SolverConfig{}, LossConfig{});
  EXPECT_LT(*evaluate_bundle(r.bundle, gt).epe_all(), 0.1);
}

// Property: the student only sees the proxy view. Image content and teacher
// labels outside the crop do not reach it.
TEST(Student, InformationBarrier) {
  const auto [qs, gt] = render(7, 64, 48);
  const ProxyTransform t = crop(8, 6, 40, 36);
  QuadSet altered = qs;
  FlowBundle teacher = gt.bundle;
  Rng rng(1);
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 64; ++x) {
      if (x >= 8 && x < 48 && y >= 6 && y < 42) continue;
      for (int v = 1; v <= kNumViews; ++v) altered.image(v)(y, x) = rng.uniform();
      for (int k = 0; k < kNumDirections; ++k) teacher[k].u()(y, x) += rng.uniform(-5, 5);
    }
  for (int v = 1; v <= kNumViews; ++v) EXPECT_TRUE(apply_proxy(qs, t).image(v) == apply_proxy(altered, t).image(v));

  const ConfidenceSet conf = bundle_confidence(gt.bundle, ConsistencyConfig{});
  VariantPlan plan;
  plan.schedule = {t};
  SolverConfig s;
  s.iterations = 40;
  const auto a = solve_student(prepare_student(plan, gt.bundle, conf, ConsistencyConfig{}), qs.dims(), s, LossConfig{});
  const auto b = solve_student(prepare_student(plan, teacher, conf, ConsistencyConfig{}), qs.dims(), s, LossConfig{});
  EXPECT_TRUE(a.bundle == b.bundle);
}

TEST(Student, RunSelfsupIsDeterministic) {
  const auto [qs, gt] = render(7, 64, 48);
  const ConfidenceSet conf = bundle_confidence(gt.bundle, ConsistencyConfig{});
  SelfsupConfig cfg;
  cfg.variant = SelfsupVariant::kV4;
  cfg.proxy_count = 2;
  SolverConfig s;
  s.iterations = 20;
  const SelfsupRun a = run_selfsup(gt.bundle, conf, qs.dims(), cfg, s, LossConfig{});
  const SelfsupRun b = run_selfsup(gt.bundle, conf, qs.dims(), cfg, s, LossConfig{});
  EXPECT_TRUE(a.student.bundle == b.student.bundle);
  ASSERT_FALSE(a.student.trace.empty());
  EXPECT_TRUE(a.student.trace.back().lq.has_value());
}

}  // namespace
}  // namespace quadflow
