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
#include <string_view>
#include <vector>

#include "quadflow/field.hpp"

namespace quadflow {

// Views of a stereoscopic quadset: 1 = left/t, 2 = right/t, 3 = left/t+1,
// 4 = right/t+1. Indices are 1-based throughout the public API.
inline constexpr int kNumViews = 4;
inline constexpr int kNumDirections = 12;

constexpr bool is_right_view(int view) { return view == 2 || view == 4; }
constexpr int view_time(int view) { return view <= 2 ? 0 : 1; }
constexpr int stereo_partner(int view) { return view % 2 == 1 ? view + 1 : view - 1; }
constexpr int temporal_partner(int view) { return view <= 2 ? view + 2 : view - 2; }
constexpr int diagonal_partner(int view) { return 5 - view; }
constexpr bool is_stereo_pair(int i, int j) { return j == stereo_partner(i); }

struct Direction {
  int from = 1;
  int to = 2;
  bool operator==(const Direction&) const = default;
};

// Fixed enumeration order of the 12 directed fields.
inline constexpr std::array<Direction, kNumDirections> kDirections{{
    {1, 2}, {1, 3}, {1, 4}, {2, 1}, {2, 3}, {2, 4},
    {3, 1}, {3, 2}, {3, 4}, {4, 1}, {4, 2}, {4, 3},
}};

// Throws std::out_of_range for i == j or views outside 1..4.
int direction_index(int from, int to);
std::string direction_name(Direction d);  // "1_2"

/// The 12 directed flow fields among the four views. Field (i, j) lives on
/// the pixel grid of view i. When rectified, stereo fields carry v == 0.
class FlowBundle {
 public:
  FlowBundle() = default;
  explicit FlowBundle(Dims dims, bool rectified = true);

  Dims dims() const { return dims_; }
  bool rectified() const { return rectified_; }

  FlowField& at(int from, int to) { return fields_[direction_index(from, to)]; }
  const FlowField& at(int from, int to) const { return fields_[direction_index(from, to)]; }
  FlowField& operator[](std::size_t k) { return fields_[k]; }
  const FlowField& operator[](std::size_t k) const { return fields_[k]; }

  // Zeroes the v component of the four stereo fields when rectified.
  void enforce_rectification();
  // Checks the 12 fields share dims and are finite.
  void validate() const;

  bool operator==(const FlowBundle&) const = default;

 private:
  Dims dims_{};
  bool rectified_ = true;
  std::array<FlowField, kNumDirections> fields_;
};

FlowBundle upsample_bundle(const FlowBundle& b, Dims target);

// ---------------------------------------------------------------------------
// 3D projection relations

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
};
inline Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(Vec3 a, Vec3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

/// Rectified stereo rig. The left camera sits at the origin, the right one at
/// (baseline, 0, 0); both look down +Z with focal length f_prime in pixels.
struct CameraRig {
  double f_prime = 100.0;
  double baseline = 0.5;
  int height = 64;
  int width = 128;
  double cx = 63.5;
  double cy = 31.5;

  void validate() const;  // f_prime > 0, baseline > 0, dims > 0
  Dims dims() const { return {height, width}; }
  Vec3 camera_center(int view) const { return {is_right_view(view) ? baseline : 0.0, 0.0, 0.0}; }
};

struct Flow2 {
  double u = 0.0;
  double v = 0.0;
};

// First-order flow of a point P moving by dP, with (X, Y) measured from the
// optical axis: f'(dX, dY)/Z - f' dZ/Z^2 (X, Y).
Flow2 flow_from_motion(Vec3 p, Vec3 dp, const CameraRig& rig);
// Difference of the exact projections of P + dP and P.
Flow2 flow_from_motion_exact(Vec3 p, Vec3 dp, const CameraRig& rig);

double disparity_from_depth(double z, const CameraRig& rig);
double depth_from_disparity(double d, const CameraRig& rig);
// Linearized d_{t+1} - d_t = -f' B dZ / Z^2.
double disparity_change_linear(double z, double dz, const CameraRig& rig);
double disparity_change_exact(double z, double dz, const CameraRig& rig);

// (uR - uL) - ((-d_{t+1}) - (-d_t)); zero when flow and disparity agree.
double quad_residual_3d(double u_left, double u_right, double d_t, double d_t1);

// ---------------------------------------------------------------------------
// Motion-view consistency on a bundle.
//
// A direction group is anchored at view a with stereo partner S, temporal
// partner T and diagonal partner D. For a = 1 this is (S, T, D) = (2, 3, 4).

enum class TriangleRoute { kViaStereo, kViaTemporal };

// Accepts "via-stereo"/"via-temporal" and, for the view-1 anchor, "via-2"/"via-3".
TriangleRoute parse_triangle_route(std::string_view tag);
std::string to_string(TriangleRoute r);

struct AnchorGroup {
  int anchor = 1;
  int stereo = 2;
  int temporal = 3;
  int diagonal = 4;
};
AnchorGroup anchor_group(int anchor);

// res_u = u_SD(pS) - u_aT(p) - u_TD(pT) + u_aS(p); res_v = v_SD(pS) - v_aT(p),
// with pS = p + w_aS(p) and pT = p + w_aT(p), all sampled bilinearly.
Flow2 quad_residual_motion(const FlowBundle& b, double x, double y, int anchor = 1);
// Via stereo: w_aD(p) - w_SD(pS) - w_aS(p) (v: v_aD(p) - v_SD(pS)).
// Via temporal: w_aD(p) - w_TD(pT) - w_aT(p) (v: v_aD(p) - v_aT(p)).
Flow2 tri_residual(const FlowBundle& b, double x, double y, TriangleRoute route, int anchor = 1);

FlowField quad_residual_map(const FlowBundle& b, int anchor = 1);
FlowField tri_residual_map(const FlowBundle& b, TriangleRoute route, int anchor = 1);

struct ResidualSummary {
  std::string name;
  std::size_t count = 0;
  double mean = 0.0;
  double max = 0.0;
  double p50 = 0.0;
  double p90 = 0.0;
  double p99 = 0.0;
};

// Statistics of the per-pixel residual magnitude |(res_u, res_v)| over `mask`.
ResidualSummary summarize_residual(const std::string& name, const FlowField& residual, const Mask& mask);
void write_residual_csv(const std::string& path, const std::vector<ResidualSummary>& rows);
// Grayscale heatmap of |residual| scaled so `max_value` maps to white
// (max over the map when max_value <= 0).
void save_residual_heatmap(const FlowField& residual, const std::string& path, double max_value = 0.0);

}  // namespace quadflow
