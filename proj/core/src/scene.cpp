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
#include "quadflow/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "quadflow/random.hpp"

namespace quadflow {

double Texture::evaluate(double s, double t) const {
  double v = mean;
  for (const Wave& w : waves) v += w.amplitude * std::sin(2.0 * std::numbers::pi * (w.ks * s + w.kt * t) + w.phase);
  return std::clamp(v, 0.0, 1.0);
}

double Texture::max_frequency() const {
  double m = 0.0;
  for (const Wave& w : waves) m = std::max(m, std::hypot(w.ks, w.kt));
  return m;
}

// ---------------------------------------------------------------------------

void SceneConfig::validate() const {
  if (width < 8 || height < 8) throw ConfigError("scene: width and height must be >= 8");
  if (!(f_prime > 0.0)) throw ConfigError("scene: f_prime must be > 0");
  if (!(baseline > 0.0)) throw ConfigError("scene: baseline must be > 0");
  if (patches < 1) throw ConfigError("scene: need at least one patch");
  if (!(depth_min > 0.0)) throw ConfigError("scene: depth_min must be > 0 (negative depths are infeasible)");
  if (!(depth_max > depth_min)) throw ConfigError("scene: depth_max must exceed depth_min");
  if (dz_min > dz_max) throw ConfigError("scene: dz_min must not exceed dz_max");
  if (dx_max < 0.0 || dy_max < 0.0) throw ConfigError("scene: dx_max and dy_max must be >= 0");
  if (texture_octaves < 1) throw ConfigError("scene: texture_octaves must be >= 1");
  if (!(texture_max_freq > 0.0 && texture_max_freq < 0.25))
    throw ConfigError("scene: texture_max_freq must be in (0, 0.25) cycles/px");
  const double slot = (depth_max - depth_min) / patches;
  const double travel = std::max(std::abs(dz_min), std::abs(dz_max));
  if (travel >= 0.9 * slot)
    throw ConfigError("scene: depth motion does not fit the per-patch depth slot; widen [depth_min, depth_max]");
}

SceneConfig SceneConfig::from_key_values(const KeyValues& kv) {
  SceneConfig c;
  c.width = static_cast<int>(kv.get_int("width", c.width));
  c.height = static_cast<int>(kv.get_int("height", c.height));
  c.f_prime = kv.get_double("f_prime", c.f_prime);
  c.baseline = kv.get_double("baseline", c.baseline);
  c.patches = static_cast<int>(kv.get_int("patches", c.patches));
  c.depth_min = kv.get_double("depth_min", c.depth_min);
  c.depth_max = kv.get_double("depth_max", c.depth_max);
  c.dx_max = kv.get_double("dx_max", c.dx_max);
  c.dy_max = kv.get_double("dy_max", c.dy_max);
  c.dz_min = kv.get_double("dz_min", c.dz_min);
  c.dz_max = kv.get_double("dz_max", c.dz_max);
  c.background_motion = kv.get_bool("background_motion", c.background_motion);
  c.texture_octaves = static_cast<int>(kv.get_int("texture_octaves", c.texture_octaves));
  c.texture_max_freq = kv.get_double("texture_max_freq", c.texture_max_freq);
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<std::int64_t>(c.seed)));
  c.validate();
  return c;
}

void SceneConfig::to_key_values(KeyValues& kv) const {
  kv.set("width", std::to_string(width));
  kv.set("height", std::to_string(height));
  kv.set("f_prime", format_double(f_prime));
  kv.set("baseline", format_double(baseline));
  kv.set("patches", std::to_string(patches));
  kv.set("depth_min", format_double(depth_min));
  kv.set("depth_max", format_double(depth_max));
  kv.set("dx_max", format_double(dx_max));
  kv.set("dy_max", format_double(dy_max));
  kv.set("dz_min", format_double(dz_min));
  kv.set("dz_max", format_double(dz_max));
  kv.set("background_motion", background_motion ? "true" : "false");
  kv.set("texture_octaves", std::to_string(texture_octaves));
  kv.set("texture_max_freq", format_double(texture_max_freq));
  kv.set("seed", std::to_string(seed));
}

namespace {

Texture make_texture(Rng& rng, int octaves, double max_freq_per_m) {
  Texture tex;
  tex.mean = rng.uniform(0.3, 0.7);
  const double budget = 0.9 * std::min(tex.mean, 1.0 - tex.mean);
  // Octave k (0 = finest) has frequency max/2^k and weight 2^k.
  double weight_sum = 0.0;
  for (int k = 0; k < octaves; ++k) weight_sum += std::ldexp(1.0, k);
  for (int k = 0; k < octaves; ++k) {
    const double freq = max_freq_per_m * std::ldexp(1.0, -k);
    const double amp = budget * std::ldexp(1.0, k) / weight_sum / 2.0;
    const double theta = rng.uniform(0.0, std::numbers::pi);
    for (int w = 0; w < 2; ++w) {
      const double a = theta + w * (std::numbers::pi / 2.0 + rng.uniform(-0.3, 0.3));
      tex.waves.push_back({freq * std::cos(a), freq * std::sin(a), rng.uniform(0.0, 2.0 * std::numbers::pi), amp});
    }
  }
  return tex;
}

}  // namespace

Scene generate_scene(std::uint64_t seed, const SceneConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(seed, 0x5ce9e));

  Scene scene;
  scene.rig.f_prime = cfg.f_prime;
  scene.rig.baseline = cfg.baseline;
  scene.rig.width = cfg.width;
  scene.rig.height = cfg.height;
  scene.rig.cx = (cfg.width - 1) / 2.0;
  scene.rig.cy = (cfg.height - 1) / 2.0;
  const CameraRig& rig = scene.rig;

  const int n = cfg.patches;
  const double slot = (cfg.depth_max - cfg.depth_min) / n;
  const double gap = 0.02 * slot;

  for (int k = 0; k < n; ++k) {
    PlanarPatch patch;
    const bool background = k == 0;
    const bool moving = !background || cfg.background_motion;
    if (moving) {
      patch.motion = {rng.uniform(-cfg.dx_max, cfg.dx_max), rng.uniform(-cfg.dy_max, cfg.dy_max),
                      rng.uniform(cfg.dz_min, cfg.dz_max)};
    } else {
      (void)rng.uniform();
      (void)rng.uniform();
      (void)rng.uniform();
    }
    // Background takes the farthest slot; later patches move nearer.
    const double slot_lo = cfg.depth_min + (n - 1 - k) * slot + gap;
    const double slot_hi = slot_lo + slot - 2.0 * gap;
    const double z_lo = slot_lo - std::min(0.0, patch.motion.z);
    const double z_hi = slot_hi - std::max(0.0, patch.motion.z);
    const double z0 = z_hi > z_lo ? rng.uniform(z_lo, z_hi) : 0.5 * (z_lo + z_hi);

    if (background) {
      const double far = z0 + std::max(0.0, patch.motion.z);
      const double reach_x = far * std::max(rig.cx, rig.width - rig.cx) / rig.f_prime;
      const double reach_y = far * std::max(rig.cy, rig.height - rig.cy) / rig.f_prime;
      patch.center = {rig.baseline / 2.0, 0.0, z0};
      patch.half_s = 2.0 * (reach_x + rig.baseline + std::abs(patch.motion.x)) + 1.0;
      patch.half_t = 2.0 * (reach_y + std::abs(patch.motion.y)) + 1.0;
    } else {
      const double px = rng.uniform(0.15, 0.85) * (rig.width - 1);
      const double py = rng.uniform(0.2, 0.8) * (rig.height - 1);
      const double frac_w = rng.uniform(0.25, 0.45);
      const double frac_h = rng.uniform(0.3, 0.6);
      patch.center = {(px - rig.cx) * z0 / rig.f_prime, (py - rig.cy) * z0 / rig.f_prime, z0};
      patch.half_s = 0.5 * frac_w * rig.width * z0 / rig.f_prime;
      patch.half_t = 0.5 * frac_h * rig.height * z0 / rig.f_prime;
    }
    const double z_far = z0 + std::max(0.0, patch.motion.z);
    patch.texture = make_texture(rng, cfg.texture_octaves, cfg.texture_max_freq * rig.f_prime / z_far);
    scene.patches.push_back(patch);
  }
  return scene;
}

// ---------------------------------------------------------------------------

void QuadSet::validate() const {
  rig.validate();
  for (int v = 1; v <= kNumViews; ++v) {
    if (image(v).empty()) throw std::invalid_argument("quadset: empty image " + std::to_string(v));
    require_same_dims(image(v).dims(), rig.dims(), "quadset image vs rig");
  }
}

RayHit cast_ray(const Scene& scene, int view, double x, double y) {
  if (view < 1 || view > kNumViews) throw std::out_of_range("cast_ray: view must be in 1..4");
  const CameraRig& rig = scene.rig;
  const Vec3 origin = rig.camera_center(view);
  const Vec3 dir{(x - rig.cx) / rig.f_prime, (y - rig.cy) / rig.f_prime, 1.0};
  const int time = view_time(view);

  RayHit best;
  for (std::size_t k = 0; k < scene.patches.size(); ++k) {
    const PlanarPatch& patch = scene.patches[k];
    const Vec3 n = patch.normal();
    const double denom = dot(n, dir);
    if (std::abs(denom) < 1e-12) continue;
    const Vec3 c = patch.center_at(time);
    const double depth = dot(n, c - origin) / denom;  // dir.z == 1
    if (!(depth > 0.0)) continue;
    if (best.patch >= 0 && depth >= best.depth) continue;
    const Vec3 hit = origin + depth * dir;
    const double s = dot(hit - c, patch.axis_s);
    const double t = dot(hit - c, patch.axis_t);
    if (std::abs(s) > patch.half_s || std::abs(t) > patch.half_t) continue;
    best = {static_cast<int>(k), depth, s, t};
  }
  return best;
}

namespace {

Vec3 surface_point(const Scene& scene, const RayHit& hit, int time) {
  const PlanarPatch& p = scene.patches[hit.patch];
  return p.center_at(time) + hit.s * p.axis_s + hit.t * p.axis_t;
}

std::optional<Point2> project(const CameraRig& rig, Vec3 point, int view) {
  const Vec3 rel = point - rig.camera_center(view);
  if (!(rel.z > 0.0)) return std::nullopt;
  return Point2{rig.f_prime * rel.x / rel.z + rig.cx, rig.f_prime * rel.y / rel.z + rig.cy};
}

void require_view(int v) {
  if (v < 1 || v > kNumViews) throw std::out_of_range("view index must be in 1..4");
}

}  // namespace

std::optional<Point2> project_correspondence(const Scene& scene, Point2 p, int view_i, int view_j) {
  require_view(view_i);
  require_view(view_j);
  const RayHit hit = cast_ray(scene, view_i, p.x, p.y);
  if (hit.patch < 0) return std::nullopt;
  return project(scene.rig, surface_point(scene, hit, view_time(view_j)), view_j);
}

std::optional<Point2> gt_correspondence(const Scene& scene, Point2 p, int view_i, int view_j) {
  require_view(view_i);
  require_view(view_j);
  const RayHit hit = cast_ray(scene, view_i, p.x, p.y);
  if (hit.patch < 0) return std::nullopt;
  const auto q = project(scene.rig, surface_point(scene, hit, view_time(view_j)), view_j);
  if (!q || !in_bounds(scene.rig.dims(), q->x, q->y)) return std::nullopt;
  if (cast_ray(scene, view_j, q->x, q->y).patch != hit.patch) return std::nullopt;
  return q;
}

std::pair<QuadSet, GroundTruth> render_quadset(const Scene& scene) {
  scene.rig.validate();
  const CameraRig& rig = scene.rig;
  const Dims dims = rig.dims();

  QuadSet qs;
  qs.rig = rig;
  GroundTruth gt;
  gt.bundle = FlowBundle(dims, true);

  std::array<Grid<RayHit>, kNumViews> hits;
  for (int v = 1; v <= kNumViews; ++v) {
    Image img(dims.height, dims.width, 1);
    Grid<int> ids(dims, -1);
    Grid<RayHit> vh(dims);
    for (int y = 0; y < dims.height; ++y)
      for (int x = 0; x < dims.width; ++x) {
        const RayHit h = cast_ray(scene, v, x, y);
        vh(y, x) = h;
        ids(y, x) = h.patch;
        img(y, x) = h.patch >= 0 ? scene.patches[h.patch].texture.evaluate(h.s, h.t) : 0.5;
      }
    qs.image(v) = std::move(img);
    gt.patch_id[v - 1] = std::move(ids);
    hits[v - 1] = std::move(vh);
  }

  for (std::size_t k = 0; k < kDirections.size(); ++k) {
    const auto [from, to] = kDirections[k];
    FlowField& flow = gt.bundle[k];
    Mask covis(dims, 0);
    const Grid<int>& ids_to = gt.patch_id[to - 1];
    for (int y = 0; y < dims.height; ++y)
      for (int x = 0; x < dims.width; ++x) {
        const RayHit& h = hits[from - 1](y, x);
        if (h.patch < 0) continue;
        const auto q = project(rig, surface_point(scene, h, view_time(to)), to);
        if (!q) continue;
        flow.u()(y, x) = q->x - x;
        flow.v()(y, x) = q->y - y;
        if (!in_bounds(dims, q->x, q->y)) continue;
        const int x0 = static_cast<int>(std::floor(q->x)), y0 = static_cast<int>(std::floor(q->y));
        const int x1 = std::min(x0 + 1, dims.width - 1), y1 = std::min(y0 + 1, dims.height - 1);
        const bool support = ids_to(y0, x0) == h.patch && ids_to(y0, x1) == h.patch &&
                             ids_to(y1, x0) == h.patch && ids_to(y1, x1) == h.patch;
        if (support && cast_ray(scene, to, q->x, q->y).patch == h.patch) covis(y, x) = 1;
      }
    gt.covisible[k] = std::move(covis);
  }
  gt.bundle.enforce_rectification();

  gt.disparity_t = DisparityField(dims);
  gt.disparity_t1 = DisparityField(dims);
  for (int y = 0; y < dims.height; ++y)
    for (int x = 0; x < dims.width; ++x) {
      const RayHit& a = hits[0](y, x);
      const RayHit& b = hits[2](y, x);
      gt.disparity_t(y, x) = a.patch >= 0 ? rig.f_prime * rig.baseline / a.depth : 0.0;
      gt.disparity_t1(y, x) = b.patch >= 0 ? rig.f_prime * rig.baseline / b.depth : 0.0;
    }
  return {std::move(qs), std::move(gt)};
}

void save_rig(const CameraRig& rig, const std::string& path) {
  KeyValues kv;
  kv.set("f_prime", format_double(rig.f_prime));
  kv.set("baseline", format_double(rig.baseline));
  kv.set("width", std::to_string(rig.width));
  kv.set("height", std::to_string(rig.height));
  kv.set("cx", format_double(rig.cx));
  kv.set("cy", format_double(rig.cy));
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << kv.to_text();
}

CameraRig load_rig(const std::string& path) {
  const KeyValues kv = KeyValues::load(path);
  CameraRig rig;
  rig.f_prime = kv.get_double("f_prime", rig.f_prime);
  rig.baseline = kv.get_double("baseline", rig.baseline);
  rig.width = static_cast<int>(kv.get_int("width", rig.width));
  rig.height = static_cast<int>(kv.get_int("height", rig.height));
  rig.cx = kv.get_double("cx", (rig.width - 1) / 2.0);
  rig.cy = kv.get_double("cy", (rig.height - 1) / 2.0);
  kv.require_all_consumed();
  rig.validate();
  return rig;
}

}  // namespace quadflow
