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
#include "quadflow/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

namespace quadflow {

int direction_index(int from, int to) {
  if (from < 1 || from > kNumViews || to < 1 || to > kNumViews || from == to)
    throw std::out_of_range("invalid direction " + std::to_string(from) + "->" + std::to_string(to));
  // Row-major over (from, to) skipping the diagonal.
  return (from - 1) * 3 + (to < from ? to - 1 : to - 2);
}

std::string direction_name(Direction d) { return std::to_string(d.from) + "_" + std::to_string(d.to); }

FlowBundle::FlowBundle(Dims dims, bool rectified) : dims_(dims), rectified_(rectified) {
  for (auto& f : fields_) f = FlowField(dims);
}

void FlowBundle::enforce_rectification() {
  if (!rectified_) return;
  for (std::size_t k = 0; k < kDirections.size(); ++k)
    if (is_stereo_pair(kDirections[k].from, kDirections[k].to)) fields_[k].v().fill(0.0);
}

void FlowBundle::validate() const {
  for (std::size_t k = 0; k < kDirections.size(); ++k) {
    require_same_dims(fields_[k].dims(), dims_, "flow bundle");
    if (!fields_[k].all_finite())
      throw std::invalid_argument("flow bundle: non-finite values in " + direction_name(kDirections[k]));
  }
}

FlowBundle upsample_bundle(const FlowBundle& b, Dims target) {
  FlowBundle out(target, b.rectified());
  for (std::size_t k = 0; k < kDirections.size(); ++k)
    out[k] = upsample_flow(b[k], target.height, target.width);
  out.enforce_rectification();
  return out;
}

// ---------------------------------------------------------------------------

void CameraRig::validate() const {
  if (!(f_prime > 0.0)) throw std::invalid_argument("camera rig: f_prime must be > 0");
  if (!(baseline > 0.0)) throw std::invalid_argument("camera rig: baseline must be > 0");
  if (height <= 0 || width <= 0) throw std::invalid_argument("camera rig: dims must be > 0");
}

namespace {

void require_positive_depth(double z, const char* what) {
  if (!(z > 0.0)) throw std::invalid_argument(std::string(what) + ": depth must be > 0");
}

}  // namespace

Flow2 flow_from_motion(Vec3 p, Vec3 dp, const CameraRig& rig) {
  require_positive_depth(p.z, "flow_from_motion");
  require_positive_depth(p.z + dp.z, "flow_from_motion");
  const double f = rig.f_prime;
  const double k = f * dp.z / (p.z * p.z);
  return {f * dp.x / p.z - k * p.x, f * dp.y / p.z - k * p.y};
}

Flow2 flow_from_motion_exact(Vec3 p, Vec3 dp, const CameraRig& rig) {
  require_positive_depth(p.z, "flow_from_motion_exact");
  require_positive_depth(p.z + dp.z, "flow_from_motion_exact");
  const double f = rig.f_prime;
  const Vec3 q = p + dp;
  return {f * q.x / q.z - f * p.x / p.z, f * q.y / q.z - f * p.y / p.z};
}

double disparity_from_depth(double z, const CameraRig& rig) {
  require_positive_depth(z, "disparity_from_depth");
  return rig.f_prime * rig.baseline / z;
}

double depth_from_disparity(double d, const CameraRig& rig) {
  if (!(d > 0.0)) throw std::invalid_argument("depth_from_disparity: disparity must be > 0");
  return rig.f_prime * rig.baseline / d;
}

double disparity_change_linear(double z, double dz, const CameraRig& rig) {
  require_positive_depth(z, "disparity_change_linear");
  return -rig.f_prime * rig.baseline * dz / (z * z);
}

double disparity_change_exact(double z, double dz, const CameraRig& rig) {
  return disparity_from_depth(z + dz, rig) - disparity_from_depth(z, rig);
}

double quad_residual_3d(double u_left, double u_right, double d_t, double d_t1) {
  return (u_right - u_left) - ((-d_t1) - (-d_t));
}

// ---------------------------------------------------------------------------

TriangleRoute parse_triangle_route(std::string_view tag) {
  if (tag == "via-stereo" || tag == "via-2") return TriangleRoute::kViaStereo;
  if (tag == "via-temporal" || tag == "via-3") return TriangleRoute::kViaTemporal;
  throw std::invalid_argument("invalid triangle route tag: " + std::string(tag));
}

std::string to_string(TriangleRoute r) {
  return r == TriangleRoute::kViaStereo ? "via-stereo" : "via-temporal";
}

AnchorGroup anchor_group(int anchor) {
  if (anchor < 1 || anchor > kNumViews) throw std::out_of_range("anchor view must be in 1..4");
  return {anchor, stereo_partner(anchor), temporal_partner(anchor), diagonal_partner(anchor)};
}

Flow2 quad_residual_motion(const FlowBundle& b, double x, double y, int anchor) {
  const AnchorGroup g = anchor_group(anchor);
  const FlowField& w_as = b.at(g.anchor, g.stereo);
  const FlowField& w_at = b.at(g.anchor, g.temporal);
  const FlowField& w_sd = b.at(g.stereo, g.diagonal);
  const FlowField& w_td = b.at(g.temporal, g.diagonal);

  const double as_u = bilinear(w_as.u(), x, y), as_v = bilinear(w_as.v(), x, y);
  const double at_u = bilinear(w_at.u(), x, y), at_v = bilinear(w_at.v(), x, y);
  const double sx = x + as_u, sy = y + as_v;
  const double tx = x + at_u, ty = y + at_v;

  Flow2 r;
  r.u = bilinear(w_sd.u(), sx, sy) - at_u - bilinear(w_td.u(), tx, ty) + as_u;
  r.v = bilinear(w_sd.v(), sx, sy) - at_v;
  return r;
}

Flow2 tri_residual(const FlowBundle& b, double x, double y, TriangleRoute route, int anchor) {
  const AnchorGroup g = anchor_group(anchor);
  const int mid = route == TriangleRoute::kViaStereo ? g.stereo : g.temporal;
  const FlowField& w_ad = b.at(g.anchor, g.diagonal);
  const FlowField& w_am = b.at(g.anchor, mid);
  const FlowField& w_md = b.at(mid, g.diagonal);

  const double am_u = bilinear(w_am.u(), x, y), am_v = bilinear(w_am.v(), x, y);
  const double mx = x + am_u, my = y + am_v;

  Flow2 r;
  r.u = bilinear(w_ad.u(), x, y) - bilinear(w_md.u(), mx, my) - am_u;
  // The stereo leg has no vertical component on a rectified rig, so each
  // route keeps a single vertical term.
  r.v = route == TriangleRoute::kViaStereo ? bilinear(w_ad.v(), x, y) - bilinear(w_md.v(), mx, my)
                                           : bilinear(w_ad.v(), x, y) - am_v;
  return r;
}

FlowField quad_residual_map(const FlowBundle& b, int anchor) {
  FlowField out(b.dims());
  for (int y = 0; y < b.dims().height; ++y)
    for (int x = 0; x < b.dims().width; ++x) {
      const Flow2 r = quad_residual_motion(b, x, y, anchor);
      out.u()(y, x) = r.u;
      out.v()(y, x) = r.v;
    }
  return out;
}

FlowField tri_residual_map(const FlowBundle& b, TriangleRoute route, int anchor) {
  FlowField out(b.dims());
  for (int y = 0; y < b.dims().height; ++y)
    for (int x = 0; x < b.dims().width; ++x) {
      const Flow2 r = tri_residual(b, x, y, route, anchor);
      out.u()(y, x) = r.u;
      out.v()(y, x) = r.v;
    }
  return out;
}

ResidualSummary summarize_residual(const std::string& name, const FlowField& residual, const Mask& mask) {
  require_same_dims(residual.dims(), mask.dims(), "summarize_residual");
  std::vector<double> mags;
  mags.reserve(mask.count());
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      if (mask(y, x)) mags.push_back(std::hypot(residual.u()(y, x), residual.v()(y, x)));

  ResidualSummary s;
  s.name = name;
  s.count = mags.size();
  if (mags.empty()) return s;
  double sum = 0.0;
  for (double m : mags) sum += m;
  s.mean = sum / static_cast<double>(mags.size());
  std::sort(mags.begin(), mags.end());
  s.max = mags.back();
  auto pct = [&](double q) {
    const auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(mags.size()))) - 1;
    return mags[std::min(idx, mags.size() - 1)];
  };
  s.p50 = pct(0.50);
  s.p90 = pct(0.90);
  s.p99 = pct(0.99);
  return s;
}

void write_residual_csv(const std::string& path, const std::vector<ResidualSummary>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "name,count,mean,max,p50,p90,p99\n" << std::setprecision(10);
  for (const auto& r : rows)
    out << r.name << ',' << r.count << ',' << r.mean << ',' << r.max << ',' << r.p50 << ',' << r.p90
        << ',' << r.p99 << '\n';
}

void save_residual_heatmap(const FlowField& residual, const std::string& path, double max_value) {
  Plane mag(residual.dims());
  double peak = 0.0;
  for (int y = 0; y < mag.height(); ++y)
    for (int x = 0; x < mag.width(); ++x) {
      mag(y, x) = std::hypot(residual.u()(y, x), residual.v()(y, x));
      peak = std::max(peak, mag(y, x));
    }
  const double scale = max_value > 0.0 ? max_value : peak;
  Image img(mag.height(), mag.width(), 1);
  for (int y = 0; y < mag.height(); ++y)
    for (int x = 0; x < mag.width(); ++x)
      img(y, x) = scale > 0.0 ? std::min(1.0, mag(y, x) / scale) : 0.0;
  save_png(img, path);
}

}  // namespace quadflow
