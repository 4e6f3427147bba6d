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
#include "quadflow/selfsup.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "quadflow/random.hpp"

namespace quadflow {

Point2 ProxyTransform::to_original(Point2 p) const {
  const double half = 0.5 * (scale - 1);
  return {x0 + scale * p.x + half, y0 + scale * p.y + half};
}

Point2 ProxyTransform::to_proxy(Point2 p) const {
  const double half = 0.5 * (scale - 1);
  return {(p.x - x0 - half) / scale, (p.y - y0 - half) / scale};
}

void ProxyTransform::validate(Dims original) const {
  if (scale != 1 && scale != 2) throw std::invalid_argument("proxy: scale must be 1 or 2");
  if (width < 32 || height < 32) throw std::invalid_argument("proxy: crop must be at least 32x32");
  if (x0 < 0 || y0 < 0 || x0 + width > original.width || y0 + height > original.height)
    throw std::invalid_argument("proxy: crop (" + std::to_string(x0) + ", " + std::to_string(y0) + ", " +
                                std::to_string(width) + ", " + std::to_string(height) + ") leaves the " +
                                to_string(original) + " image");
  if (width % scale || height % scale) throw std::invalid_argument("proxy: crop not divisible by the scale");
  if (!(noise >= 0.0)) throw std::invalid_argument("proxy: noise must be >= 0");
  for (int v : noise_views)
    if (v < 1 || v > kNumViews) throw std::invalid_argument("proxy: noise view out of range");
}

ProxyTransform ProxyTransform::identity(Dims d) {
  ProxyTransform t;
  t.width = d.width;
  t.height = d.height;
  return t;
}

ProxyTransform compose(const ProxyTransform& first, const ProxyTransform& second) {
  ProxyTransform t = second;
  t.scale = first.scale * second.scale;
  if (t.scale > 2) throw std::invalid_argument("compose: combined scale exceeds 2");
  t.x0 = first.x0 + first.scale * second.x0;
  t.y0 = first.y0 + first.scale * second.y0;
  t.width = first.scale * second.width;
  t.height = first.scale * second.height;
  return t;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<int> parse_views(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok.erase(0, tok.find_first_not_of(' '));
    tok.erase(tok.find_last_not_of(' ') + 1);
    if (tok.empty()) continue;
    if (tok.size() != 1 || tok[0] < '1' || tok[0] > '4') throw ConfigError("proxy: bad noise view '" + tok + "'");
    out.push_back(tok[0] - '0');
  }
  return out;
}

std::string join_views(const std::vector<int>& views) {
  std::string s;
  for (int v : views) s += (s.empty() ? "" : ",") + std::to_string(v);
  return s;
}

}  // namespace

void ProxyConfig::validate() const {
  if (!(crop_min_fraction > 0.0 && crop_min_fraction <= crop_max_fraction && crop_max_fraction <= 1.0))
    throw ConfigError("proxy: need 0 < crop_min_fraction <= crop_max_fraction <= 1");
  if (!(scale2_probability >= 0.0 && scale2_probability <= 1.0))
    throw ConfigError("proxy: scale2_probability must be in [0, 1]");
  if (!(noise_amplitude >= 0.0)) throw ConfigError("proxy: noise_amplitude must be >= 0");
  for (int v : noise_views)
    if (v < 1 || v > kNumViews) throw ConfigError("proxy: noise view out of range");
}

ProxyConfig ProxyConfig::from_key_values(const KeyValues& kv) {
  ProxyConfig c;
  c.crop_min_fraction = kv.get_double("crop_min_fraction", c.crop_min_fraction);
  c.crop_max_fraction = kv.get_double("crop_max_fraction", c.crop_max_fraction);
  c.scale2_probability = kv.get_double("scale2_probability", c.scale2_probability);
  c.noise_amplitude = kv.get_double("noise_amplitude", c.noise_amplitude);
  if (kv.has("noise_views")) c.noise_views = parse_views(kv.get_string("noise_views", ""));
  c.validate();
  return c;
}

void ProxyConfig::to_key_values(KeyValues& kv) const {
  kv.set("crop_min_fraction", format_double(crop_min_fraction));
  kv.set("crop_max_fraction", format_double(crop_max_fraction));
  kv.set("scale2_probability", format_double(scale2_probability));
  kv.set("noise_amplitude", format_double(noise_amplitude));
  kv.set("noise_views", join_views(noise_views));
}

ProxyConfig ProxyConfig::identity() {
  ProxyConfig c;
  c.crop_min_fraction = 1.0;
  c.crop_max_fraction = 1.0;
  c.scale2_probability = 0.0;
  c.noise_amplitude = 0.0;
  return c;
}

ProxyTransform sample_proxy_transform(Dims original, std::uint64_t seed, const ProxyConfig& cfg) {
  cfg.validate();
  if (original.width < 32 || original.height < 32)
    throw std::invalid_argument("proxy: image " + to_string(original) + " is smaller than the 32x32 minimum crop");
  Rng rng(derive_seed(seed, 0x7072));
  ProxyTransform t;
  t.scale = rng.uniform() < cfg.scale2_probability ? 2 : 1;
  auto side = [&](int full) {
    const double frac = rng.uniform(cfg.crop_min_fraction, cfg.crop_max_fraction);
    int s = std::clamp(static_cast<int>(std::lround(frac * full)), 32, full);
    s -= s % t.scale;
    return s;
  };
  t.width = side(original.width);
  t.height = side(original.height);
  t.x0 = static_cast<int>(rng.uniform_int(0, original.width - t.width));
  t.y0 = static_cast<int>(rng.uniform_int(0, original.height - t.height));
  t.noise = cfg.noise_amplitude;
  t.noise_views = cfg.noise_views;
  t.seed = derive_seed(seed, 0x6e6f);
  t.validate(original);
  return t;
}

QuadSet apply_proxy(const QuadSet& quadset, const ProxyTransform& t) {
  quadset.validate();
  t.validate(quadset.dims());
  QuadSet out;
  for (int v = 1; v <= kNumViews; ++v) {
    const Image& src = quadset.image(v);
    Image crop(t.height, t.width, src.channels());
    for (int y = 0; y < t.height; ++y)
      for (int x = 0; x < t.width; ++x)
        for (int c = 0; c < src.channels(); ++c) crop(y, x, c) = src(t.y0 + y, t.x0 + x, c);
    Image img = t.scale == 2 ? downsample2(crop) : crop;
    if (t.noise > 0.0 && std::find(t.noise_views.begin(), t.noise_views.end(), v) != t.noise_views.end()) {
      Rng rng(derive_seed(t.seed, static_cast<std::uint64_t>(v)));
      for (double& s : img.values()) s = std::clamp(s + rng.uniform(-t.noise, t.noise), 0.0, 1.0);
    }
    out.image(v) = std::move(img);
  }
  const double half = 0.5 * (t.scale - 1);
  out.rig = quadset.rig;
  out.rig.f_prime = quadset.rig.f_prime / t.scale;
  out.rig.width = t.width / t.scale;
  out.rig.height = t.height / t.scale;
  out.rig.cx = (quadset.rig.cx - t.x0 - half) / t.scale;
  out.rig.cy = (quadset.rig.cy - t.y0 - half) / t.scale;
  return out;
}

ProxySample make_proxy(const QuadSet& quadset, std::uint64_t seed, const ProxyConfig& cfg) {
  ProxyTransform t = sample_proxy_transform(quadset.dims(), seed, cfg);
  return {apply_proxy(quadset, t), t};
}

// ---------------------------------------------------------------------------
// Label transport

namespace {

std::uint8_t nearest_mask(const Mask& m, double x, double y) {
  const int nx = std::clamp(static_cast<int>(std::floor(x + 0.5)), 0, m.width() - 1);
  const int ny = std::clamp(static_cast<int>(std::floor(y + 0.5)), 0, m.height() - 1);
  return m(ny, nx);
}

FlowField seen_through(const FlowField& w, const ProxyTransform& t) {
  const Dims pd = t.proxy_dims();
  FlowField out(pd);
  for (int y = 0; y < pd.height; ++y)
    for (int x = 0; x < pd.width; ++x) {
      if (t.lattice_aligned()) {
        out.u()(y, x) = w.u()(t.y0 + y, t.x0 + x);
        out.v()(y, x) = w.v()(t.y0 + y, t.x0 + x);
      } else {
        const Point2 p = t.to_original({static_cast<double>(x), static_cast<double>(y)});
        out.u()(y, x) = bilinear(w.u(), p.x, p.y) / t.scale;
        out.v()(y, x) = bilinear(w.v(), p.x, p.y) / t.scale;
      }
    }
  return out;
}

// Adjoint of seen_through: proxy-frame values are pushed back onto the
// original grid, with `power` extra factors of 1/s.
void scatter_back(const FlowField& g, const ProxyTransform& t, int power, FlowField& out) {
  const Dims pd = t.proxy_dims();
  const double f = std::pow(1.0 / t.scale, power);
  for (int y = 0; y < pd.height; ++y)
    for (int x = 0; x < pd.width; ++x) {
      if (t.lattice_aligned()) {
        out.u()(t.y0 + y, t.x0 + x) += g.u()(y, x);
        out.v()(t.y0 + y, t.x0 + x) += g.v()(y, x);
      } else {
        const Point2 p = t.to_original({static_cast<double>(x), static_cast<double>(y)});
        bilinear_scatter(out.u(), p.x, p.y, f * g.u()(y, x));
        bilinear_scatter(out.v(), p.x, p.y, f * g.v()(y, x));
      }
    }
}

}  // namespace

Labels transport_labels(const FlowField& w, const Mask& m, const ProxyTransform& t) {
  require_same_dims(w.dims(), m.dims(), "transport_labels");
  t.validate(w.dims());
  Labels out{seen_through(w, t), Mask(t.proxy_dims(), 0)};
  for (int y = 0; y < out.mask.height(); ++y)
    for (int x = 0; x < out.mask.width(); ++x) {
      const Point2 p = t.to_original({static_cast<double>(x), static_cast<double>(y)});
      out.mask(y, x) = nearest_mask(m, p.x, p.y);
    }
  return out;
}

Labels untransport_labels(const FlowField& w, const Mask& m, const ProxyTransform& t, Dims original) {
  t.validate(original);
  require_same_dims(w.dims(), t.proxy_dims(), "untransport_labels flow");
  require_same_dims(m.dims(), t.proxy_dims(), "untransport_labels mask");
  Labels out{FlowField(original), Mask(original, 0)};
  for (int y = t.y0; y < t.y0 + t.height; ++y)
    for (int x = t.x0; x < t.x0 + t.width; ++x) {
      if (t.lattice_aligned()) {
        out.flow.u()(y, x) = w.u()(y - t.y0, x - t.x0);
        out.flow.v()(y, x) = w.v()(y - t.y0, x - t.x0);
        out.mask(y, x) = m(y - t.y0, x - t.x0);
      } else {
        const Point2 q = t.to_proxy({static_cast<double>(x), static_cast<double>(y)});
        out.flow.u()(y, x) = t.scale * bilinear(w.u(), q.x, q.y);
        out.flow.v()(y, x) = t.scale * bilinear(w.v(), q.x, q.y);
        out.mask(y, x) = nearest_mask(m, q.x, q.y);
      }
    }
  return out;
}

LabelSet transport_labels(const FlowBundle& b, const std::array<Mask, kNumDirections>& masks,
                          const ProxyTransform& t) {
  LabelSet out{FlowBundle(t.proxy_dims(), b.rectified()), {}};
  for (int k = 0; k < kNumDirections; ++k) {
    Labels l = transport_labels(b[k], masks[k], t);
    out.flows[k] = std::move(l.flow);
    out.masks[k] = std::move(l.mask);
  }
  out.flows.enforce_rectification();
  return out;
}

FlowBundle to_proxy_frame(const FlowBundle& b, const ProxyTransform& t) {
  t.validate(b.dims());
  FlowBundle out(t.proxy_dims(), b.rectified());
  for (int k = 0; k < kNumDirections; ++k) out[k] = seen_through(b[k], t);
  out.enforce_rectification();
  return out;
}

std::array<Mask, kNumDirections> proxy_visibility(const LabelSet& labels, const ConsistencyConfig& cfg) {
  std::array<Mask, kNumDirections> out;
  for (int k = 0; k < kNumDirections; ++k) {
    const auto [from, to] = kDirections[k];
    out[k] = fb_consistency(labels.flows[k], labels.flows.at(to, from), cfg);
  }
  return out;
}

std::array<Mask, kNumDirections> crop_occluded(const GroundTruth& gt, const ProxyTransform& t) {
  const LabelSet l = transport_labels(gt.bundle, gt.covisible, t);
  std::array<Mask, kNumDirections> out;
  for (int k = 0; k < kNumDirections; ++k) {
    const Dims d = l.flows.dims();
    out[k] = Mask(d, 0);
    for (int y = 0; y < d.height; ++y)
      for (int x = 0; x < d.width; ++x)
        if (l.masks[k](y, x) && !in_bounds(d, x + l.flows[k].u()(y, x), y + l.flows[k].v()(y, x)))
          out[k](y, x) = 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Variants

SelfsupVariant parse_selfsup_variant(const std::string& tag) {
  if (tag == "v1") return SelfsupVariant::kV1;
  if (tag == "v2") return SelfsupVariant::kV2;
  if (tag == "v3") return SelfsupVariant::kV3;
  if (tag == "v4") return SelfsupVariant::kV4;
  throw ConfigError("unknown self-supervision variant '" + tag + "' (expected v1, v2, v3 or v4)");
}

std::string to_string(SelfsupVariant v) {
  switch (v) {
    case SelfsupVariant::kV1: return "v1";
    case SelfsupVariant::kV2: return "v2";
    case SelfsupVariant::kV3: return "v3";
    case SelfsupVariant::kV4: return "v4";
  }
  return "?";
}

void SelfsupConfig::validate() const {
  if (proxy_count < 1) throw ConfigError("selfsup: proxy_count must be >= 1");
  proxy.validate();
  consistency.validate();
}

SelfsupConfig SelfsupConfig::from_key_values(const KeyValues& kv) {
  SelfsupConfig c;
  c.variant = parse_selfsup_variant(kv.get_string("variant", to_string(c.variant)));
  c.proxy_count = static_cast<int>(kv.get_int("proxy_count", c.proxy_count));
  c.proxy_seed = static_cast<std::uint64_t>(kv.get_int("proxy_seed", static_cast<std::int64_t>(c.proxy_seed)));
  c.proxy = ProxyConfig::from_key_values(kv);
  c.consistency = ConsistencyConfig::from_key_values(kv);
  c.validate();
  return c;
}

void SelfsupConfig::to_key_values(KeyValues& kv) const {
  kv.set("variant", to_string(variant));
  kv.set("proxy_count", std::to_string(proxy_count));
  kv.set("proxy_seed", std::to_string(proxy_seed));
  proxy.to_key_values(kv);
  consistency.to_key_values(kv);
}

VariantPlan selfsup_variant(SelfsupVariant v, Dims original, const SelfsupConfig& cfg) {
  cfg.validate();
  VariantPlan plan;
  plan.variant = v;
  plan.gate_occlusion = v == SelfsupVariant::kV1;
  plan.geometric = v == SelfsupVariant::kV4;
  ProxyConfig pc = cfg.proxy;
  int count = 1;
  if (v == SelfsupVariant::kV1 || v == SelfsupVariant::kV2) {
    pc.scale2_probability = 0.0;
    pc.noise_amplitude = 0.0;
  } else {
    pc.scale2_probability = 1.0;
    count = cfg.proxy_count;
  }
  for (int k = 0; k < count; ++k)
    plan.schedule.push_back(sample_proxy_transform(original, derive_seed(cfg.proxy_seed, k), pc));
  return plan;
}

std::vector<StudentProxy> prepare_student(const VariantPlan& plan, const FlowBundle& teacher,
                                          const ConfidenceSet& teacher_confidence, const ConsistencyConfig& cfg) {
  std::vector<StudentProxy> out;
  for (const ProxyTransform& t : plan.schedule) {
    StudentProxy p{t, transport_labels(teacher, teacher_confidence.direction, t)};
    if (plan.gate_occlusion) {
      const auto vis = proxy_visibility(p.labels, cfg);
      for (int k = 0; k < kNumDirections; ++k) p.labels.masks[k] = p.labels.masks[k] & vis[k];
    }
    out.push_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Student solve

namespace {

// Unlabelled pixels take the mean of their labelled 4-neighbours, sweep by
// sweep, until every pixel is reached.
void fill_holes(FlowField& f, Mask known) {
  const Dims d = f.dims();
  if (known.count() == 0) {
    f.u().fill(0.0);
    f.v().fill(0.0);
    return;
  }
  constexpr int kDy[4] = {-1, 1, 0, 0}, kDx[4] = {0, 0, -1, 1};
  while (known.count() < d.area()) {
    Mask next = known;
    FlowField g = f;
    for (int y = 0; y < d.height; ++y)
      for (int x = 0; x < d.width; ++x) {
        if (known(y, x)) continue;
        double su = 0.0, sv = 0.0;
        int n = 0;
        for (int k = 0; k < 4; ++k) {
          const int ny = y + kDy[k], nx = x + kDx[k];
          if (ny < 0 || nx < 0 || ny >= d.height || nx >= d.width || !known(ny, nx)) continue;
          su += f.u()(ny, nx);
          sv += f.v()(ny, nx);
          ++n;
        }
        if (n == 0) continue;
        g.u()(y, x) = su / n;
        g.v()(y, x) = sv / n;
        next(y, x) = 1;
      }
    f = std::move(g);
    known = std::move(next);
  }
}

FlowBundle initial_student(const std::vector<StudentProxy>& proxies, Dims original, bool rectified) {
  FlowBundle out(original, rectified);
  for (int k = 0; k < kNumDirections; ++k) {
    Plane su(original, 0.0), sv(original, 0.0), n(original, 0.0);
    for (const StudentProxy& p : proxies) {
      const Labels l = untransport_labels(p.labels.flows[k], p.labels.masks[k], p.transform, original);
      for (std::size_t i = 0; i < su.size(); ++i) {
        if (!l.mask.values()[i]) continue;
        su.values()[i] += l.flow.u().values()[i];
        sv.values()[i] += l.flow.v().values()[i];
        n.values()[i] += 1.0;
      }
    }
    Mask known(original, 0);
    for (std::size_t i = 0; i < su.size(); ++i) {
      if (n.values()[i] == 0.0) continue;
      out[k].u().values()[i] = su.values()[i] / n.values()[i];
      out[k].v().values()[i] = sv.values()[i] / n.values()[i];
      known.values()[i] = 1;
    }
    fill_holes(out[k], known);
  }
  out.enforce_rectification();
  return out;
}

}  // namespace

StudentResult solve_student(const std::vector<StudentProxy>& proxies, Dims original, const SolverConfig& solver,
                            const LossConfig& loss, const StudentOptions& opts) {
  solver.validate();
  loss.validate();
  if (proxies.empty()) throw std::invalid_argument("solve_student: no proxies");
  bool any = false;
  for (const StudentProxy& p : proxies) {
    p.transform.validate(original);
    require_same_dims(p.labels.flows.dims(), p.transform.proxy_dims(), "solve_student labels");
    for (const Mask& m : p.labels.masks) any = any || m.count() > 0;
  }
  if (!any) throw std::invalid_argument("solve_student: every label mask is empty");
  if (opts.geometric) require_same_dims(opts.geometric->direction[0].dims(), original, "solve_student geometric masks");
  const bool rectified = proxies.front().labels.flows.rectified();

  auto make_level = [&](int, Dims) {
    LevelProblem p;
    p.evaluate = [&](const FlowBundle& b, FlowBundle* grad, FlowBundle* curv) {
      LossReport r;
      r.lambda1 = loss.lambda1;
      r.lambda2 = loss.lambda2;
      r.lambda_s = solver.lambda_s;

      std::array<double, kNumDirections> dir_sum{};
      std::array<int, kNumDirections> dir_n{};
      double ls_sum = 0.0;
      int defined = 0;
      for (const StudentProxy& p : proxies) {
        bool proxy_defined = false;
        for (const Mask& m : p.labels.masks) proxy_defined = proxy_defined || m.count() > 0;
        if (proxy_defined) ++defined;
      }
      const double inv_k = 1.0 / defined;
      for (const StudentProxy& p : proxies) {
        for (int k = 0; k < kNumDirections; ++k) {
          const Mask& m = p.labels.masks[k];
          if (m.count() == 0) continue;
          const FlowField seen = seen_through(b[k], p.transform);
          FlowField g, c;
          if (grad) g = FlowField(seen.dims());
          if (curv) c = FlowField(seen.dims());
          const LossTerm t =
              selfsup_loss(seen, p.labels.flows[k], m, loss, grad ? &g : nullptr, curv ? &c : nullptr);
          ls_sum += t.value * inv_k;
          dir_sum[k] += t.value;
          ++dir_n[k];
          r.ls_count[k] += t.count;
          if (grad) {
            for (int comp = 0; comp < 2; ++comp)
              for (double& v : g.component(comp).values()) v *= inv_k;
            scatter_back(g, p.transform, 1, (*grad)[k]);
          }
          if (curv) {
            for (int comp = 0; comp < 2; ++comp)
              for (double& v : c.component(comp).values()) v *= inv_k;
            scatter_back(c, p.transform, 2, (*curv)[k]);
          }
        }
      }
      for (int k = 0; k < kNumDirections; ++k)
        if (dir_n[k]) r.ls_direction[k] = dir_sum[k] / dir_n[k];
      r.ls = ls_sum;

      if (opts.geometric) {
        auto weighted = [&](double lambda, auto&& fn) -> std::optional<LossTerm> {
          FlowBundle g, c;
          if (grad) g = FlowBundle(b.dims(), b.rectified());
          if (curv) c = FlowBundle(b.dims(), b.rectified());
          try {
            LossTerm t = fn(grad ? &g : nullptr, curv ? &c : nullptr);
            if (grad) add_scaled(*grad, g, lambda);
            if (curv) add_scaled(*curv, c, lambda);
            return t;
          } catch (const UndefinedTermError&) {
            return std::nullopt;
          }
        };
        if (loss.lambda1 > 0.0)
          if (auto t = weighted(loss.lambda1, [&](FlowBundle* g, FlowBundle* c) {
                return quad_loss(b, *opts.geometric, loss, g, c);
              })) {
            r.lq = t->value;
            r.lq_count = t->count;
          }
        if (loss.lambda2 > 0.0)
          if (auto t = weighted(loss.lambda2, [&](FlowBundle* g, FlowBundle* c) {
                return tri_loss(b, *opts.geometric, loss, g, c);
              })) {
            r.lt = t->value;
            r.lt_count = t->count;
          }
      }

      FlowBundle sg, sc;
      if (grad) sg = FlowBundle(b.dims(), b.rectified());
      if (curv) sc = FlowBundle(b.dims(), b.rectified());
      r.smoothness = smoothness_loss(b, loss, grad ? &sg : nullptr, curv ? &sc : nullptr);
      if (grad) add_scaled(*grad, sg, solver.lambda_s);
      if (curv) add_scaled(*curv, sc, solver.lambda_s);
      r.total = *r.ls + loss.lambda1 * r.lq.value_or(0.0) + loss.lambda2 * r.lt.value_or(0.0);
      r.objective = r.total + solver.lambda_s * *r.smoothness;
      return r;
    };
    return p;
  };

  const FlowBundle init = initial_student(proxies, original, rectified);
  StudentResult out;
  DescentOptions d;
  d.levels = 1;
  d.init = &init;
  out.bundle = descend_coarse_to_fine(original, solver, d, make_level, &out.trace);
  return out;
}

SelfsupRun run_selfsup(const FlowBundle& teacher, const ConfidenceSet& teacher_confidence, Dims original,
                       const SelfsupConfig& cfg, const SolverConfig& solver, const LossConfig& loss) {
  SelfsupRun run;
  run.plan = selfsup_variant(cfg.variant, original, cfg);
  const auto proxies = prepare_student(run.plan, teacher, teacher_confidence, cfg.consistency);
  StudentOptions opts;
  if (run.plan.geometric) opts.geometric = &teacher_confidence;
  run.student = solve_student(proxies, original, solver, loss, opts);
  return run;
}

}  // namespace quadflow
