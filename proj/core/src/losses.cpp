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
#include "quadflow/losses.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

namespace quadflow {

void LossConfig::validate() const {
  if (!(epsilon > 0.0)) throw ConfigError("loss: epsilon must be > 0");
  if (!(q > 0.0 && q <= 1.0)) throw ConfigError("loss: q must be in (0, 1]");
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw ConfigError("loss: lambda1 and lambda2 must be >= 0");
  if (census_window < 3 || census_window % 2 == 0) throw ConfigError("loss: census_window must be odd and >= 3");
  if (!(census_soft_scale > 0.0)) throw ConfigError("loss: census_soft_scale must be > 0");
  if (triangle_routes.empty()) throw ConfigError("loss: at least one triangle route is required");
  if (anchors.empty()) throw ConfigError("loss: at least one anchor is required");
  for (int a : anchors)
    if (a < 1 || a > kNumViews) throw ConfigError("loss: anchors must be views 1..4");
}

namespace {

std::vector<int> parse_anchor_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(std::remove_if(item.begin(), item.end(), ::isspace), item.end());
    if (item.size() != 1 || item[0] < '1' || item[0] > '4') throw ConfigError("loss: bad anchor '" + item + "'");
    const int a = item[0] - '0';
    if (std::find(out.begin(), out.end(), a) != out.end()) throw ConfigError("loss: duplicate anchor");
    out.push_back(a);
  }
  return out;
}

}  // namespace

LossConfig LossConfig::from_key_values(const KeyValues& kv) {
  LossConfig c;
  c.epsilon = kv.get_double("epsilon", c.epsilon);
  c.q = kv.get_double("q", c.q);
  c.lambda1 = kv.get_double("lambda1", c.lambda1);
  c.lambda2 = kv.get_double("lambda2", c.lambda2);
  c.census_window = static_cast<int>(kv.get_int("census_window", c.census_window));
  c.census_soft_scale = kv.get_double("census_soft_scale", c.census_soft_scale);

  const std::string photo = kv.get_string("photometric", "census");
  if (photo == "census") c.photometric = PhotometricMode::kCensus;
  else if (photo == "raw") c.photometric = PhotometricMode::kRaw;
  else throw ConfigError("loss: photometric must be census or raw");

  const std::string route = kv.get_string("triangle_route", "via-stereo");
  if (route == "both") {
    c.triangle_routes = {TriangleRoute::kViaStereo, TriangleRoute::kViaTemporal};
  } else {
    try {
      c.triangle_routes = {parse_triangle_route(route)};
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("loss: ") + e.what());
    }
  }
  if (kv.has("anchors")) c.anchors = parse_anchor_list(kv.get_string("anchors", ""));

  const std::string norm = kv.get_string("selfsup_norm", "componentwise");
  if (norm == "componentwise") c.selfsup_norm = SelfsupNorm::kComponentwise;
  else if (norm == "vector") c.selfsup_norm = SelfsupNorm::kVector;
  else throw ConfigError("loss: selfsup_norm must be componentwise or vector");
  c.validate();
  return c;
}

void LossConfig::to_key_values(KeyValues& kv) const {
  kv.set("epsilon", format_double(epsilon));
  kv.set("q", format_double(q));
  kv.set("lambda1", format_double(lambda1));
  kv.set("lambda2", format_double(lambda2));
  kv.set("census_window", std::to_string(census_window));
  kv.set("census_soft_scale", format_double(census_soft_scale));
  kv.set("photometric", photometric == PhotometricMode::kCensus ? "census" : "raw");
  kv.set("triangle_route", triangle_routes.size() > 1 ? "both" : to_string(triangle_routes.front()));
  std::string a;
  for (int v : anchors) a += (a.empty() ? "" : ",") + std::to_string(v);
  kv.set("anchors", a);
  kv.set("selfsup_norm", selfsup_norm == SelfsupNorm::kComponentwise ? "componentwise" : "vector");
}

// ---------------------------------------------------------------------------

namespace {

struct PsiEval {
  double value;
  double slope;
  double weight;  // q (|x| + eps)^(q-2), majorizer curvature
};

inline PsiEval psi_eval(double x, double eps, double q) {
  const double a = std::abs(x) + eps;
  const double t = std::pow(a, q - 1.0);
  const double s = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
  return {t * a, s * q * t, q * t / a};
}

}  // namespace

double psi(double x, const LossConfig& cfg) { return std::pow(std::abs(x) + cfg.epsilon, cfg.q); }

double psi_derivative(double x, const LossConfig& cfg) { return psi_eval(x, cfg.epsilon, cfg.q).slope; }

Plane psi(const Plane& p, const LossConfig& cfg) {
  Plane out(p.dims());
  auto o = out.values();
  auto in = p.values();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = psi(in[i], cfg);
  return out;
}

// ---------------------------------------------------------------------------
// Census

CensusField::CensusField(Dims d, int window) : dims_(d), window_(window) {
  data_.assign(d.area() * static_cast<std::size_t>(taps()), 0.0);
}

namespace {

struct Offset {
  int dy, dx;
};

std::vector<Offset> census_offsets(int window) {
  const int r = window / 2;
  std::vector<Offset> out;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx)
      if (dy != 0 || dx != 0) out.push_back({dy, dx});
  return out;
}

void check_window(Dims d, int window) {
  if (window > d.height || window > d.width)
    throw std::invalid_argument("census window " + std::to_string(window) + " exceeds image " + to_string(d));
}

inline double soft_sign(double d, double s) { return d / std::sqrt(s + d * d); }
// d/dd of d/sqrt(s + d^2) = s / (s + d^2)^1.5
inline double soft_sign_slope(double d, double s) {
  const double r = s + d * d;
  return s / (r * std::sqrt(r));
}

}  // namespace

CensusField census_descriptor(const Image& img, const LossConfig& cfg) {
  if (img.channels() != 1) throw std::invalid_argument("census_descriptor: expects a single-channel image");
  const Dims d = img.dims();
  check_window(d, cfg.census_window);
  CensusField out(d, cfg.census_window);
  const auto offs = census_offsets(cfg.census_window);
  for (int y = 0; y < d.height; ++y)
    for (int x = 0; x < d.width; ++x) {
      auto desc = out.at(y, x);
      const double c = img(y, x);
      for (std::size_t k = 0; k < offs.size(); ++k) {
        const int ny = std::clamp(y + offs[k].dy, 0, d.height - 1);
        const int nx = std::clamp(x + offs[k].dx, 0, d.width - 1);
        desc[k] = soft_sign(img(ny, nx) - c, cfg.census_soft_scale);
      }
    }
  return out;
}

// ---------------------------------------------------------------------------
// Photometric

LossTerm photometric_loss(const Image& image_i, const Image& image_j, const FlowField& w, const Mask& m,
                          const LossConfig& cfg, FlowField* grad, FlowField* curvature) {
  CensusField ref;
  if (cfg.photometric == PhotometricMode::kCensus) ref = census_descriptor(image_i, cfg);
  return photometric_loss(ref, image_i, image_j, w, m, cfg, grad, curvature);
}

LossTerm photometric_loss(const CensusField& census_i, const Image& image_i, const Image& image_j,
                          const FlowField& w, const Mask& m, const LossConfig& cfg, FlowField* grad,
                          FlowField* curvature) {
  const Dims d = w.dims();
  require_same_dims(image_i.dims(), d, "photometric_loss image_i");
  require_same_dims(image_j.dims(), d, "photometric_loss image_j");
  require_same_dims(m.dims(), d, "photometric_loss mask");
  if (image_i.channels() != 1 || image_j.channels() != 1)
    throw std::invalid_argument("photometric_loss: expects single-channel images");
  const bool census = cfg.photometric == PhotometricMode::kCensus;
  if (census) {
    require_same_dims(census_i.dims(), d, "photometric_loss census");
    if (census_i.window() != cfg.census_window) throw std::invalid_argument("photometric_loss: census window mismatch");
  }

  LossTerm term;
  term.count = m.count();
  if (term.count == 0) throw UndefinedTermError("photometric loss: empty confidence mask");
  const double inv_n = 1.0 / static_cast<double>(term.count);

  // Warped target with its spatial gradient at each landing point.
  const Plane target = image_j.plane(0);
  Plane warped(d), gx(d), gy(d);
  for (int y = 0; y < d.height; ++y)
    for (int x = 0; x < d.width; ++x) {
      const SampleGrad s = bilinear_grad(target, x + w.u()(y, x), y + w.v()(y, x));
      warped(y, x) = s.value;
      gx(y, x) = s.dx;
      gy(y, x) = s.dy;
    }

  Plane d_warped, c_warped;
  if (grad) d_warped = Plane(d, 0.0);
  if (curvature) c_warped = Plane(d, 0.0);
  double total = 0.0;

  if (!census) {
    for (int y = 0; y < d.height; ++y) {
      double row = 0.0;
      for (int x = 0; x < d.width; ++x) {
        if (!m(y, x)) continue;
        const PsiEval e = psi_eval(image_i(y, x) - warped(y, x), cfg.epsilon, cfg.q);
        row += e.value;
        if (grad) d_warped(y, x) -= e.slope * inv_n;
        if (curvature) c_warped(y, x) += e.weight * inv_n;
      }
      total += row;
    }
  } else {
    const auto offs = census_offsets(cfg.census_window);
    const double s = cfg.census_soft_scale;
    for (int y = 0; y < d.height; ++y) {
      double row = 0.0;
      for (int x = 0; x < d.width; ++x) {
        if (!m(y, x)) continue;
        const auto ref = census_i.at(y, x);
        const double c = warped(y, x);
        double center_grad = 0.0;
        for (std::size_t k = 0; k < offs.size(); ++k) {
          const int ny = std::clamp(y + offs[k].dy, 0, d.height - 1);
          const int nx = std::clamp(x + offs[k].dx, 0, d.width - 1);
          const double diff = warped(ny, nx) - c;
          const PsiEval e = psi_eval(ref[k] - soft_sign(diff, s), cfg.epsilon, cfg.q);
          row += e.value;
          if (grad || curvature) {
            const double slope = soft_sign_slope(diff, s);
            if (grad) {
              const double g = -e.slope * slope * inv_n;
              d_warped(ny, nx) += g;
              center_grad -= g;
            }
            if (curvature) {
              const double c = e.weight * slope * slope * inv_n;
              c_warped(ny, nx) += c;
              c_warped(y, x) += c;
            }
          }
        }
        if (grad) d_warped(y, x) += center_grad;
      }
      total += row;
    }
  }
  term.value = total * inv_n;

  if (grad) {
    require_same_dims(grad->dims(), d, "photometric_loss gradient");
    for (int y = 0; y < d.height; ++y)
      for (int x = 0; x < d.width; ++x) {
        grad->u()(y, x) += d_warped(y, x) * gx(y, x);
        grad->v()(y, x) += d_warped(y, x) * gy(y, x);
      }
  }
  if (curvature) {
    require_same_dims(curvature->dims(), d, "photometric_loss curvature");
    for (int y = 0; y < d.height; ++y)
      for (int x = 0; x < d.width; ++x) {
        curvature->u()(y, x) += c_warped(y, x) * gx(y, x) * gx(y, x);
        curvature->v()(y, x) += c_warped(y, x) * gy(y, x) * gy(y, x);
      }
  }
  return term;
}

// ---------------------------------------------------------------------------
// Motion-view consistency

namespace {

void require_bundle_out(const FlowBundle& b, const FlowBundle* out) {
  if (out && out->dims() != b.dims()) throw std::invalid_argument("gradient bundle dims mismatch");
}

// Per-field output planes of one loss evaluation; null when not requested.
struct FieldOut {
  FlowField* grad = nullptr;
  FlowField* curv = nullptr;
};

FieldOut field_out(FlowBundle* grad, FlowBundle* curv, int from, int to) {
  return {grad ? &grad->at(from, to) : nullptr, curv ? &curv->at(from, to) : nullptr};
}

inline void add_direct(const FieldOut& o, int c, int y, int x, double g, double h) {
  if (o.grad) o.grad->component(c)(y, x) += g;
  if (o.curv) o.curv->component(c)(y, x) += h;
}

inline void add_sampled(const FieldOut& o, int c, double sx, double sy, double g, double h) {
  if (o.grad && g != 0.0) bilinear_scatter(o.grad->component(c), sx, sy, g);
  if (o.curv && h != 0.0) bilinear_scatter(o.curv->component(c), sx, sy, h);
}

}  // namespace

LossTerm quad_loss_group(const FlowBundle& b, const Mask& m, int anchor, const LossConfig& cfg, FlowBundle* grad,
                         FlowBundle* curvature) {
  require_same_dims(m.dims(), b.dims(), "quad_loss mask");
  require_bundle_out(b, grad);
  require_bundle_out(b, curvature);
  const AnchorGroup g = anchor_group(anchor);
  const FlowField& w_as = b.at(g.anchor, g.stereo);
  const FlowField& w_at = b.at(g.anchor, g.temporal);
  const FlowField& w_sd = b.at(g.stereo, g.diagonal);
  const FlowField& w_td = b.at(g.temporal, g.diagonal);

  LossTerm term;
  term.count = m.count();
  if (term.count == 0) throw UndefinedTermError("quadrilateral loss: empty confidence mask");
  const double inv_n = 1.0 / static_cast<double>(term.count);
  const bool outputs = grad || curvature;
  const FieldOut o_as = field_out(grad, curvature, g.anchor, g.stereo);
  const FieldOut o_at = field_out(grad, curvature, g.anchor, g.temporal);
  const FieldOut o_sd = field_out(grad, curvature, g.stereo, g.diagonal);
  const FieldOut o_td = field_out(grad, curvature, g.temporal, g.diagonal);

  double total = 0.0;
  for (int y = 0; y < m.height(); ++y) {
    double row = 0.0;
    for (int x = 0; x < m.width(); ++x) {
      if (!m(y, x)) continue;
      const double as_u = w_as.u()(y, x), as_v = w_as.v()(y, x);
      const double at_u = w_at.u()(y, x), at_v = w_at.v()(y, x);
      const double sx = x + as_u, sy = y + as_v;
      const double tx = x + at_u, ty = y + at_v;
      const SampleGrad sdu = bilinear_grad(w_sd.u(), sx, sy);
      const SampleGrad sdv = bilinear_grad(w_sd.v(), sx, sy);
      const SampleGrad tdu = bilinear_grad(w_td.u(), tx, ty);
      const double ru = sdu.value - at_u - tdu.value + as_u;
      const double rv = sdv.value - at_v;
      const PsiEval eu = psi_eval(ru, cfg.epsilon, cfg.q);
      const PsiEval ev = psi_eval(rv, cfg.epsilon, cfg.q);
      row += eu.value + ev.value;
      if (!outputs) continue;
      const double gu = eu.slope * inv_n, gv = ev.slope * inv_n;
      const double hu = eu.weight * inv_n, hv = ev.weight * inv_n;
      const double a_u = sdu.dx + 1.0, t_u = tdu.dx + 1.0;
      add_direct(o_as, 0, y, x, gu * a_u + gv * sdv.dx, hu * a_u * a_u + hv * sdv.dx * sdv.dx);
      add_direct(o_as, 1, y, x, gu * sdu.dy + gv * sdv.dy, hu * sdu.dy * sdu.dy + hv * sdv.dy * sdv.dy);
      add_direct(o_at, 0, y, x, -gu * t_u, hu * t_u * t_u);
      add_direct(o_at, 1, y, x, -gu * tdu.dy - gv, hu * tdu.dy * tdu.dy + hv);
      add_sampled(o_sd, 0, sx, sy, gu, hu);
      add_sampled(o_sd, 1, sx, sy, gv, hv);
      add_sampled(o_td, 0, tx, ty, -gu, hu);
    }
    total += row;
  }
  term.value = total * inv_n;
  return term;
}

LossTerm tri_loss_group(const FlowBundle& b, const Mask& m, int anchor, TriangleRoute route, const LossConfig& cfg,
                        FlowBundle* grad, FlowBundle* curvature) {
  require_same_dims(m.dims(), b.dims(), "tri_loss mask");
  require_bundle_out(b, grad);
  require_bundle_out(b, curvature);
  const AnchorGroup g = anchor_group(anchor);
  const bool via_stereo = route == TriangleRoute::kViaStereo;
  const int mid = via_stereo ? g.stereo : g.temporal;
  const FlowField& w_ad = b.at(g.anchor, g.diagonal);
  const FlowField& w_am = b.at(g.anchor, mid);
  const FlowField& w_md = b.at(mid, g.diagonal);

  LossTerm term;
  term.count = m.count();
  if (term.count == 0) throw UndefinedTermError("triangle loss: empty confidence mask");
  const double inv_n = 1.0 / static_cast<double>(term.count);
  const bool outputs = grad || curvature;
  const FieldOut o_ad = field_out(grad, curvature, g.anchor, g.diagonal);
  const FieldOut o_am = field_out(grad, curvature, g.anchor, mid);
  const FieldOut o_md = field_out(grad, curvature, mid, g.diagonal);

  double total = 0.0;
  for (int y = 0; y < m.height(); ++y) {
    double row = 0.0;
    for (int x = 0; x < m.width(); ++x) {
      if (!m(y, x)) continue;
      const double am_u = w_am.u()(y, x), am_v = w_am.v()(y, x);
      const double mx = x + am_u, my = y + am_v;
      const SampleGrad mdu = bilinear_grad(w_md.u(), mx, my);
      const double ru = w_ad.u()(y, x) - mdu.value - am_u;
      SampleGrad mdv;
      double rv;
      if (via_stereo) {
        mdv = bilinear_grad(w_md.v(), mx, my);
        rv = w_ad.v()(y, x) - mdv.value;
      } else {
        rv = w_ad.v()(y, x) - am_v;
      }
      const PsiEval eu = psi_eval(ru, cfg.epsilon, cfg.q);
      const PsiEval ev = psi_eval(rv, cfg.epsilon, cfg.q);
      row += eu.value + ev.value;
      if (!outputs) continue;
      const double gu = eu.slope * inv_n, gv = ev.slope * inv_n;
      const double hu = eu.weight * inv_n, hv = ev.weight * inv_n;
      const double m_u = mdu.dx + 1.0;
      add_direct(o_ad, 0, y, x, gu, hu);
      add_direct(o_ad, 1, y, x, gv, hv);
      add_direct(o_am, 0, y, x, -gu * m_u, hu * m_u * m_u);
      add_direct(o_am, 1, y, x, -gu * mdu.dy, hu * mdu.dy * mdu.dy);
      add_sampled(o_md, 0, mx, my, -gu, hu);
      if (via_stereo) {
        add_direct(o_am, 0, y, x, -gv * mdv.dx, hv * mdv.dx * mdv.dx);
        add_direct(o_am, 1, y, x, -gv * mdv.dy, hv * mdv.dy * mdv.dy);
        add_sampled(o_md, 1, mx, my, -gv, hv);
      } else {
        add_direct(o_am, 1, y, x, -gv, hv);
      }
    }
    total += row;
  }
  term.value = total * inv_n;
  return term;
}

LossTerm quad_loss(const FlowBundle& b, const ConfidenceSet& conf, const LossConfig& cfg, FlowBundle* grad,
                   FlowBundle* curvature) {
  LossTerm sum;
  for (int a : cfg.anchors) {
    const Mask m = conf.quad(a);
    if (m.count() == 0) continue;
    const LossTerm t = quad_loss_group(b, m, a, cfg, grad, curvature);
    sum.value += t.value;
    sum.count += t.count;
  }
  if (sum.count == 0) throw UndefinedTermError("quadrilateral loss: every group mask is empty");
  return sum;
}

LossTerm tri_loss(const FlowBundle& b, const ConfidenceSet& conf, const LossConfig& cfg, FlowBundle* grad,
                  FlowBundle* curvature) {
  LossTerm sum;
  for (TriangleRoute route : cfg.triangle_routes)
    for (int a : cfg.anchors) {
      const Mask m = conf.tri(a, route);
      if (m.count() == 0) continue;
      const LossTerm t = tri_loss_group(b, m, a, route, cfg, grad, curvature);
      sum.value += t.value;
      sum.count += t.count;
    }
  if (sum.count == 0) throw UndefinedTermError("triangle loss: every group mask is empty");
  return sum;
}

// ---------------------------------------------------------------------------
// Self-supervision and smoothness

LossTerm selfsup_loss(const FlowField& student, const FlowField& teacher, const Mask& m, const LossConfig& cfg,
                      FlowField* grad, FlowField* curvature) {
  require_same_dims(student.dims(), teacher.dims(), "selfsup_loss");
  require_same_dims(student.dims(), m.dims(), "selfsup_loss mask");
  if (grad) require_same_dims(student.dims(), grad->dims(), "selfsup_loss gradient");
  if (curvature) require_same_dims(student.dims(), curvature->dims(), "selfsup_loss curvature");
  LossTerm term;
  term.count = m.count();
  if (term.count == 0) throw UndefinedTermError("self-supervision loss: empty confidence mask");
  const double inv_n = 1.0 / static_cast<double>(term.count);
  const bool vector = cfg.selfsup_norm == SelfsupNorm::kVector;
  const FieldOut o{grad, curvature};

  double total = 0.0;
  for (int y = 0; y < m.height(); ++y) {
    double row = 0.0;
    for (int x = 0; x < m.width(); ++x) {
      if (!m(y, x)) continue;
      const double du = student.u()(y, x) - teacher.u()(y, x);
      const double dv = student.v()(y, x) - teacher.v()(y, x);
      if (vector) {
        const double n = std::hypot(du, dv);
        const PsiEval e = psi_eval(n, cfg.epsilon, cfg.q);
        row += e.value;
        const double h = e.weight * inv_n;
        if (n > 0.0) {
          add_direct(o, 0, y, x, e.slope * du / n * inv_n, h);
          add_direct(o, 1, y, x, e.slope * dv / n * inv_n, h);
        } else {
          add_direct(o, 0, y, x, 0.0, h);
          add_direct(o, 1, y, x, 0.0, h);
        }
      } else {
        const PsiEval eu = psi_eval(du, cfg.epsilon, cfg.q);
        const PsiEval ev = psi_eval(dv, cfg.epsilon, cfg.q);
        row += eu.value + ev.value;
        add_direct(o, 0, y, x, eu.slope * inv_n, eu.weight * inv_n);
        add_direct(o, 1, y, x, ev.slope * inv_n, ev.weight * inv_n);
      }
    }
    total += row;
  }
  term.value = total * inv_n;
  return term;
}

LossTerm selfsup_loss(const FlowBundle& student, const FlowBundle& teacher,
                      const std::array<Mask, kNumDirections>& masks, const LossConfig& cfg, FlowBundle* grad,
                      FlowBundle* curvature) {
  require_same_dims(student.dims(), teacher.dims(), "selfsup_loss bundle");
  require_bundle_out(student, grad);
  require_bundle_out(student, curvature);
  LossTerm sum;
  for (int k = 0; k < kNumDirections; ++k) {
    if (masks[k].count() == 0) continue;
    const LossTerm t = selfsup_loss(student[k], teacher[k], masks[k], cfg, grad ? &(*grad)[k] : nullptr,
                                    curvature ? &(*curvature)[k] : nullptr);
    sum.value += t.value;
    sum.count += t.count;
  }
  if (sum.count == 0) throw UndefinedTermError("self-supervision loss: every direction mask is empty");
  return sum;
}

double smoothness_loss(const FlowField& w, const LossConfig& cfg, FlowField* grad, FlowField* curvature) {
  const Dims d = w.dims();
  if (d.area() == 0) return 0.0;
  if (grad) require_same_dims(d, grad->dims(), "smoothness_loss gradient");
  if (curvature) require_same_dims(d, curvature->dims(), "smoothness_loss curvature");
  const double inv = 1.0 / (2.0 * static_cast<double>(d.area()));
  double total = 0.0;
  for (int c = 0; c < 2; ++c) {
    const Plane& p = w.component(c);
    Plane* g = grad ? &grad->component(c) : nullptr;
    Plane* h = curvature ? &curvature->component(c) : nullptr;
    auto link = [&](int y0, int x0, int y1, int x1) {
      const PsiEval e = psi_eval(p(y1, x1) - p(y0, x0), cfg.epsilon, cfg.q);
      if (g) {
        (*g)(y1, x1) += e.slope * inv;
        (*g)(y0, x0) -= e.slope * inv;
      }
      if (h) {
        (*h)(y1, x1) += e.weight * inv;
        (*h)(y0, x0) += e.weight * inv;
      }
      return e.value;
    };
    for (int y = 0; y < d.height; ++y) {
      double row = 0.0;
      for (int x = 0; x < d.width; ++x) {
        if (x + 1 < d.width) row += link(y, x, y, x + 1);
        if (y + 1 < d.height) row += link(y, x, y + 1, x);
      }
      total += row;
    }
  }
  return total * inv;
}

double smoothness_loss(const FlowBundle& b, const LossConfig& cfg, FlowBundle* grad, FlowBundle* curvature) {
  require_bundle_out(b, grad);
  require_bundle_out(b, curvature);
  double total = 0.0;
  for (int k = 0; k < kNumDirections; ++k)
    total += smoothness_loss(b[k], cfg, grad ? &(*grad)[k] : nullptr, curvature ? &(*curvature)[k] : nullptr);
  return total;
}

// ---------------------------------------------------------------------------
// Reports

std::string TermToggles::to_string() const {
  std::string s;
  auto add = [&](bool on, const char* name) {
    if (on) s += (s.empty() ? "" : "+") + std::string(name);
  };
  add(lp, "lp");
  add(lq, "lq");
  add(lt, "lt");
  return s.empty() ? "none" : s;
}

namespace {

std::string opt_csv(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace

std::string loss_csv_header() {
  return "level,iteration,step,lp,lq,lt,ls,smoothness,total,objective,lambda1,lambda2,lambda_s,lq_count,lt_count";
}

std::string to_csv_row(const LossReport& r) {
  std::string s = std::to_string(r.level) + "," + std::to_string(r.iteration) + "," + format_double(r.step);
  for (const auto* v : {&r.lp, &r.lq, &r.lt, &r.ls, &r.smoothness}) s += "," + opt_csv(*v);
  for (double v : {r.total, r.objective, r.lambda1, r.lambda2, r.lambda_s}) s += "," + format_double(v);
  s += "," + std::to_string(r.lq_count) + "," + std::to_string(r.lt_count);
  return s;
}

std::string to_json_line(const LossReport& r) {
  nlohmann::json j;
  j["level"] = r.level;
  j["iteration"] = r.iteration;
  j["step"] = r.step;
  j["lp"] = opt_json(r.lp);
  j["lq"] = opt_json(r.lq);
  j["lt"] = opt_json(r.lt);
  j["ls"] = opt_json(r.ls);
  j["smoothness"] = opt_json(r.smoothness);
  j["total"] = r.total;
  j["objective"] = r.objective;
  j["lambda1"] = r.lambda1;
  j["lambda2"] = r.lambda2;
  j["lambda_s"] = r.lambda_s;
  nlohmann::json dirs = nlohmann::json::object();
  for (int k = 0; k < kNumDirections; ++k) {
    const std::string name = direction_name(kDirections[k]);
    if (r.lp_direction[k]) dirs["lp_" + name] = {{"value", *r.lp_direction[k]}, {"count", r.lp_count[k]}};
    if (r.ls_direction[k]) dirs["ls_" + name] = {{"value", *r.ls_direction[k]}, {"count", r.ls_count[k]}};
  }
  j["directions"] = dirs;
  j["lq_count"] = r.lq_count;
  j["lt_count"] = r.lt_count;
  return j.dump();
}

// ---------------------------------------------------------------------------
// Teacher total

TeacherObjective::TeacherObjective(std::array<Image, kNumViews> images, const LossConfig& cfg, TermToggles toggles)
    : images_(std::move(images)), cfg_(cfg), toggles_(toggles) {
  cfg_.validate();
  for (int v = 0; v < kNumViews; ++v) {
    if (images_[v].channels() != 1) images_[v] = to_grayscale(images_[v]);
    require_same_dims(images_[v].dims(), images_[0].dims(), "TeacherObjective images");
  }
  if (toggles_.lp && cfg_.photometric == PhotometricMode::kCensus)
    for (int v = 0; v < kNumViews; ++v) census_[v] = census_descriptor(images_[v], cfg_);
}

LossReport TeacherObjective::evaluate(const FlowBundle& b, const ConfidenceSet& conf, FlowBundle* grad,
                                      FlowBundle* curvature) const {
  require_same_dims(b.dims(), dims(), "TeacherObjective bundle");
  require_bundle_out(b, grad);
  require_bundle_out(b, curvature);
  LossReport r;
  r.lambda1 = cfg_.lambda1;
  r.lambda2 = cfg_.lambda2;

  if (toggles_.lp) {
    std::array<LossTerm, kNumDirections> terms{};
#pragma omp parallel for schedule(dynamic, 1)
    for (int k = 0; k < kNumDirections; ++k) {
      const auto [from, to] = kDirections[k];
      const Mask& m = conf.direction[k];
      if (m.count() == 0) continue;
      terms[k] = photometric_loss(census_[from - 1], images_[from - 1], images_[to - 1], b[k], m, cfg_,
                                  grad ? &(*grad)[k] : nullptr, curvature ? &(*curvature)[k] : nullptr);
    }
    double sum = 0.0;
    bool any = false;
    for (int k = 0; k < kNumDirections; ++k) {
      r.lp_count[k] = terms[k].count;
      if (terms[k].count == 0) continue;
      r.lp_direction[k] = terms[k].value;
      sum += terms[k].value;
      any = true;
    }
    if (any) r.lp = sum;
  }

  // Geometric terms go through scratch outputs so they can be weighted.
  FlowBundle g_scratch, c_scratch;
  auto weighted = [&](double lambda, auto&& term_fn) -> std::optional<LossTerm> {
    if (grad) g_scratch = FlowBundle(b.dims(), b.rectified());
    if (curvature) c_scratch = FlowBundle(b.dims(), b.rectified());
    try {
      LossTerm t = term_fn(grad ? &g_scratch : nullptr, curvature ? &c_scratch : nullptr);
      if (grad) add_scaled(*grad, g_scratch, lambda);
      if (curvature) add_scaled(*curvature, c_scratch, lambda);
      return t;
    } catch (const UndefinedTermError&) {
      return std::nullopt;
    }
  };
  if (toggles_.lq && cfg_.lambda1 > 0.0) {
    if (auto t = weighted(cfg_.lambda1,
                          [&](FlowBundle* g, FlowBundle* c) { return quad_loss(b, conf, cfg_, g, c); })) {
      r.lq = t->value;
      r.lq_count = t->count;
    }
  }
  if (toggles_.lt && cfg_.lambda2 > 0.0) {
    if (auto t = weighted(cfg_.lambda2,
                          [&](FlowBundle* g, FlowBundle* c) { return tri_loss(b, conf, cfg_, g, c); })) {
      r.lt = t->value;
      r.lt_count = t->count;
    }
  }
  r.total = r.lp.value_or(0.0) + cfg_.lambda1 * r.lq.value_or(0.0) + cfg_.lambda2 * r.lt.value_or(0.0);
  r.objective = r.total;
  return r;
}

LossReport total_teacher_loss(const FlowBundle& b, const std::array<Image, kNumViews>& images,
                              const ConfidenceSet& conf, const LossConfig& cfg, FlowBundle* grad,
                              TermToggles toggles) {
  return TeacherObjective(images, cfg, toggles).evaluate(b, conf, grad);
}

void add_scaled(FlowBundle& dst, const FlowBundle& src, double scale) {
  require_same_dims(dst.dims(), src.dims(), "add_scaled");
  for (int k = 0; k < kNumDirections; ++k)
    for (int c = 0; c < 2; ++c) {
      auto d = dst[k].component(c).values();
      auto s = src[k].component(c).values();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += scale * s[i];
    }
}

}  // namespace quadflow
