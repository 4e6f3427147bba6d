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
#include <optional>
#include <vector>

#include "quadflow/config.hpp"
#include "quadflow/field.hpp"
#include "quadflow/geometry.hpp"

namespace quadflow {

/// Band-limited procedural texture: a sum of oriented sinusoids in patch
/// coordinates (meters). Values stay inside [mean - amplitude, mean + amplitude].
struct Texture {
  struct Wave {
    double ks = 0.0;  // cycles per meter along the patch s axis
    double kt = 0.0;
    double phase = 0.0;
    double amplitude = 0.0;
  };
  double mean = 0.5;
  std::vector<Wave> waves;

  double evaluate(double s, double t) const;
  double max_frequency() const;  // cycles per meter
};

/// Rectangle in a plane, in left-camera coordinates at time t, translating by
/// `motion` between t and t+1.
struct PlanarPatch {
  Vec3 center;
  Vec3 axis_s{1.0, 0.0, 0.0};  // unit, in-plane
  Vec3 axis_t{0.0, 1.0, 0.0};  // unit, in-plane, orthogonal to axis_s
  double half_s = 1.0;
  double half_t = 1.0;
  Vec3 motion;
  Texture texture;

  Vec3 normal() const { return cross(axis_s, axis_t); }
  Vec3 center_at(int time) const { return time == 0 ? center : center + motion; }
};

struct Scene {
  CameraRig rig;
  std::vector<PlanarPatch> patches;  // patches[0] is the background
};

struct SceneConfig {
  int width = 128;
  int height = 64;
  double f_prime = 100.0;
  double baseline = 0.5;
  int patches = 3;           // including the background plane
  double depth_min = 6.0;    // meters, nearest allowed depth at either time
  double depth_max = 16.0;
  double dx_max = 0.25;      // lateral motion range [-dx_max, dx_max], meters
  double dy_max = 0.1;
  double dz_min = 0.0;       // depth motion drawn from [dz_min, dz_max]
  double dz_max = 0.0;
  bool background_motion = true;
  int texture_octaves = 3;
  double texture_max_freq = 0.04;  // cycles/px at the patch's farthest depth
  std::uint64_t seed = 7;

  void validate() const;  // throws ConfigError
  bool wants_depth_motion() const { return dz_min != 0.0 || dz_max != 0.0; }

  static SceneConfig from_key_values(const KeyValues& kv);
  void to_key_values(KeyValues& kv) const;
};

// Deterministic in (seed, cfg). Patches occupy disjoint depth slots over both
// time steps, nearest slot last; all patches are fronto-parallel.
Scene generate_scene(std::uint64_t seed, const SceneConfig& cfg);

/// I1 (left, t), I2 (right, t), I3 (left, t+1), I4 (right, t+1).
struct QuadSet {
  std::array<Image, kNumViews> images;
  CameraRig rig;

  const Image& image(int view) const { return images.at(view - 1); }
  Image& image(int view) { return images.at(view - 1); }
  Dims dims() const { return images[0].dims(); }
  void validate() const;
};

struct GroundTruth {
  FlowBundle bundle;
  // Per direction (kDirections order): 1 where the correspondence lands in
  // frame, on the same surface, with its whole bilinear support on that surface.
  std::array<Mask, kNumDirections> covisible;
  DisparityField disparity_t;   // left view at t
  DisparityField disparity_t1;  // left view at t+1
  std::array<Grid<int>, kNumViews> patch_id;  // -1 where no surface is hit

  const Mask& covisible_mask(int from, int to) const { return covisible[direction_index(from, to)]; }
};

struct RayHit {
  int patch = -1;
  double depth = 0.0;
  double s = 0.0;  // patch coordinates of the hit
  double t = 0.0;
};

// Nearest patch along the ray of pixel (x, y) in `view`.
RayHit cast_ray(const Scene& scene, int view, double x, double y);

std::pair<QuadSet, GroundTruth> render_quadset(const Scene& scene);

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

// Correspondence of pixel p of view i in view j, or nullopt when the point is
// hidden or out of frame in view j. Throws std::out_of_range for bad views.
std::optional<Point2> gt_correspondence(const Scene& scene, Point2 p, int view_i, int view_j);

// Projection of p's surface point into view j regardless of visibility.
std::optional<Point2> project_correspondence(const Scene& scene, Point2 p, int view_i, int view_j);

void save_rig(const CameraRig& rig, const std::string& path);
CameraRig load_rig(const std::string& path);

}  // namespace quadflow
