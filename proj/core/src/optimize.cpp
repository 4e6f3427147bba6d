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
#include "quadflow/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdio>
#include <memory>

#include "quadflow/random.hpp"

namespace quadflow {

void SolverConfig::validate() const {
  if (pyramid_levels < 1) throw ConfigError("solver: pyramid_levels must be >= 1");
  if (iterations < 0) throw ConfigError("solver: iterations must be >= 0");
  if (!(step > 0.0)) throw ConfigError("solver: step must be > 0");
  if (!(step_max >= step)) throw ConfigError("solver: step_max must be >= step");
  if (!(damping > 0.0)) throw ConfigError("solver: damping must be > 0");
  if (!(step_growth >= 1.0)) throw ConfigError("solver: step_growth must be >= 1");
  if (!(step_shrink > 0.0 && step_shrink < 1.0)) throw ConfigError("solver: step_shrink must be in (0, 1)");
  if (max_backtracks < 1) throw ConfigError("solver: max_backtracks must be >= 1");
  if (!(armijo >= 0.0 && armijo < 1.0)) throw ConfigError("solver: armijo must be in [0, 1)");
  if (!(lambda_s >= 0.0)) throw ConfigError("solver: lambda_s must be >= 0");
  if (!(tolerance >= 0.0)) throw ConfigError("solver: tolerance must be >= 0");
  if (refresh_interval < 1) throw ConfigError("solver: refresh_interval must be >= 1");
  if (!(init_noise >= 0.0)) throw ConfigError("solver: init_noise must be >= 0");
  if (!(match_radius >= 0.0)) throw ConfigError("solver: match_radius must be >= 0");
  if (match_box < 0) throw ConfigError("solver: match_box must be >= 0");
}

SolverConfig SolverConfig::from_key_values(const KeyValues& kv) {
  SolverConfig c;
  c.pyramid_levels = static_cast<int>(kv.get_int("pyramid_levels", c.pyramid_levels));
  c.iterations = static_cast<int>(kv.get_int("iterations", c.iterations));
  c.precondition = kv.get_bool("precondition", c.precondition);
  c.damping = kv.get_double("damping", c.damping);
  c.step = kv.get_double("step", c.step);
  c.step_max = kv.get_double("step_max", c.step_max);
  c.step_growth = kv.get_double("step_growth", c.step_growth);
  c.step_shrink = kv.get_double("step_shrink", c.step_shrink);
  c.max_backtracks = static_cast<int>(kv.get_int("max_backtracks", c.max_backtracks));
  c.armijo = kv.get_double("armijo", c.armijo);
  c.lambda_s = kv.get_double("lambda_s", c.lambda_s);
  c.tolerance = kv.get_double("tolerance", c.tolerance);
  c.refresh_interval = static_cast<int>(kv.get_int("refresh_interval", c.refresh_interval));
  c.init_seed = static_cast<std::uint64_t>(kv.get_int("init_seed", static_cast<std::int64_t>(c.init_seed)));
  c.init_noise = kv.get_double("init_noise", c.init_noise);
  c.match_init = kv.get_bool("match_init", c.match_init);
  c.match_radius = kv.get_double("match_radius", c.match_radius);
  c.match_box = static_cast<int>(kv.get_int("match_box", c.match_box));
  c.validate();
  return c;
}

void SolverConfig::to_key_values(KeyValues& kv) const {
  kv.set("pyramid_levels", std::to_string(pyramid_levels));
  kv.set("iterations", std::to_string(iterations));
  kv.set("precondition", precondition ? "true" : "false");
  kv.set("damping", format_double(damping));
  kv.set("step", format_double(step));
  kv.set("step_max", format_double(step_max));
  kv.set("step_growth", format_double(step_growth));
  kv.set("step_shrink", format_double(step_shrink));
  kv.set("max_backtracks", std::to_string(max_backtracks));
  kv.set("armijo", format_double(armijo));
  kv.set("lambda_s", format_double(lambda_s));
  kv.set("tolerance", format_double(tolerance));
  kv.set("refresh_interval", std::to_string(refresh_interval));
  kv.set("init_seed", std::to_string(init_seed));
  kv.set("init_noise", format_double(init_noise));
  kv.set("match_init", match_init ? "true" : "false");
  kv.set("match_radius", format_double(match_radius));
  kv.set("match_box", std::to_string(match_box));
}

// ---------------------------------------------------------------------------

namespace {

double dot(const FlowBundle& a, const FlowBundle& b) {
  double s = 0.0;
  for (int k = 0; k < kNumDirections; ++k)
    for (int c = 0; c < 2; ++c) {
      auto av = a[k].component(c).values();
      auto bv = b[k].component(c).values();
      for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
    }
  return s;
}

void zero_stereo_vertical(FlowBundle& g) {
  if (!g.rectified()) return;
  for (int k = 0; k < kNumDirections; ++k)
    if (is_stereo_pair(kDirections[k].from, kDirections[k].to)) g[k].v().fill(0.0);
}

void check_finite(const LossReport& r, int level, int iteration) {
  if (!std::isfinite(r.objective))
    throw NumericError("objective is not finite at level " + std::to_string(level) + ", iteration " +
                       std::to_string(iteration));
}

// Descent direction: -g / (h + damping * mean(h)), or -N g without curvature.
FlowBundle descent_direction(const FlowBundle& g, const FlowBundle* h, const SolverConfig& cfg) {
  FlowBundle d = g;
  if (!h) {
    const double n = static_cast<double>(g.dims().area());
    for (int k = 0; k < kNumDirections; ++k)
      for (int c = 0; c < 2; ++c)
        for (double& v : d[k].component(c).values()) v *= -n;
    return d;
  }
  double mean = 0.0;
  std::size_t count = 0;
  for (int k = 0; k < kNumDirections; ++k)
    for (int c = 0; c < 2; ++c)
      for (double v : (*h)[k].component(c).values()) {
        mean += v;
        ++count;
      }
  mean = count ? mean / static_cast<double>(count) : 0.0;
  const double mu = cfg.damping * mean + 1e-300;
  for (int k = 0; k < kNumDirections; ++k)
    for (int c = 0; c < 2; ++c) {
      auto dv = d[k].component(c).values();
      auto hv = (*h)[k].component(c).values();
      for (std::size_t i = 0; i < dv.size(); ++i) dv[i] = -dv[i] / (hv[i] + mu);
    }
  return d;
}

void descend_level(FlowBundle& x, const LevelProblem& prob, const SolverConfig& cfg, int level,
                   std::vector<LossReport>* trace) {
  const Dims d = x.dims();
  double eta = cfg.step;

  FlowBundle g, h;
  auto evaluate = [&](const FlowBundle& at, FlowBundle& grad, FlowBundle& curv) {
    grad = FlowBundle(d, x.rectified());
    if (cfg.precondition) curv = FlowBundle(d, x.rectified());
    LossReport r = prob.evaluate(at, &grad, cfg.precondition ? &curv : nullptr);
    zero_stereo_vertical(grad);
    return r;
  };

  if (prob.refresh) prob.refresh(x);
  LossReport current = evaluate(x, g, h);
  check_finite(current, level, 0);
  current.level = level;
  current.iteration = 0;
  if (trace) trace->push_back(current);

  FlowBundle trial, trial_g, trial_h;
  for (int it = 0; it < cfg.iterations; ++it) {
    if (prob.refresh && it > 0 && it % cfg.refresh_interval == 0) {
      prob.refresh(x);
      current = evaluate(x, g, h);
      check_finite(current, level, it);
    }
    const FlowBundle dir = descent_direction(g, cfg.precondition ? &h : nullptr, cfg);
    const double slope = dot(g, dir);
    if (!(slope < 0.0)) break;

    bool accepted = false;
    bool any_finite = false;
    LossReport next;
    for (int bt = 0; bt < cfg.max_backtracks; ++bt) {
      trial = x;
      add_scaled(trial, dir, eta);
      next = evaluate(trial, trial_g, trial_h);
      if (std::isfinite(next.objective)) {
        any_finite = true;
        if (next.objective <= current.objective + cfg.armijo * eta * slope) {
          accepted = true;
          break;
        }
      }
      eta *= cfg.step_shrink;
    }
    if (!accepted) {
      if (!any_finite)
        throw NumericError("every trial step diverged at level " + std::to_string(level) + ", iteration " +
                           std::to_string(it));
      break;
    }
    const double rel = (current.objective - next.objective) / std::max(std::abs(current.objective), 1e-300);
    std::swap(x, trial);
    std::swap(g, trial_g);
    std::swap(h, trial_h);
    current = next;
    current.level = level;
    current.iteration = it + 1;
    current.step = eta;
    if (trace) trace->push_back(current);
    eta = std::min(eta * cfg.step_growth, cfg.step_max);
    if (rel < cfg.tolerance) break;
  }
}

}  // namespace

int usable_levels(Dims full, int requested, int min_extent) {
  int levels = 1;
  while (levels < requested) {
    const Dims next = level_dims(full, levels);
    if (next.height < min_extent || next.width < min_extent) break;
    ++levels;
  }
  return levels;
}

FlowBundle descend_coarse_to_fine(Dims full, const SolverConfig& cfg, const DescentOptions& opts,
                                  const std::function<LevelProblem(int level, Dims dims)>& make_level,
                                  std::vector<LossReport>* trace) {
  cfg.validate();
  if (opts.levels < 1) throw std::invalid_argument("descend_coarse_to_fine: levels must be >= 1");
  const int first = opts.init ? 0 : opts.levels - 1;
  FlowBundle x;
  for (int level = first; level >= 0; --level) {
    const Dims d = level_dims(full, level);
    if (level == first) {
      if (opts.init) {
        require_same_dims(opts.init->dims(), full, "descend_coarse_to_fine init");
        x = *opts.init;
      } else if (opts.coarse_init) {
        require_same_dims(opts.coarse_init->dims(), d, "descend_coarse_to_fine coarse_init");
        x = *opts.coarse_init;
      } else {
        x = FlowBundle(d, true);
        if (cfg.init_noise > 0.0) {
          Rng rng(derive_seed(cfg.init_seed, 0x1417));
          for (int k = 0; k < kNumDirections; ++k)
            for (int c = 0; c < 2; ++c)
              for (double& v : x[k].component(c).values()) v = rng.uniform(-cfg.init_noise, cfg.init_noise);
          x.enforce_rectification();
        }
      }
    } else {
      x = upsample_bundle(x, d);
    }
    const LevelProblem prob = make_level(level, d);
    descend_level(x, prob, cfg, level, trace);
  }
  return x;
}

FlowField block_match(const Image& image_i, const Image& image_j, const MatchOptions& opts, const LossConfig& cfg) {
  if (opts.radius_u < 0 || opts.radius_v < 0 || opts.box < 0) throw std::invalid_argument("block_match: negative radius");
  const Image gi = image_i.channels() == 1 ? image_i : to_grayscale(image_i);
  const Image gj = image_j.channels() == 1 ? image_j : to_grayscale(image_j);
  const Dims d = gi.dims();
  require_same_dims(gj.dims(), d, "block_match");
  if (opts.seed) require_same_dims(opts.seed->dims(), d, "block_match seed");
  const bool census = cfg.photometric == PhotometricMode::kCensus;
  CensusField ci, cj;
  if (census) {
    ci = census_descriptor(gi, cfg);
    cj = census_descriptor(gj, cfg);
  }

  // L1 descriptor distance summed over the box around p, target shifted by (du, dv).
  auto cost = [&](int y, int x, int du, int dv) {
    double c = 0.0;
    for (int qy = std::max(0, y - opts.box); qy <= std::min(d.height - 1, y + opts.box); ++qy)
      for (int qx = std::max(0, x - opts.box); qx <= std::min(d.width - 1, x + opts.box); ++qx) {
        const int ty = std::clamp(qy + dv, 0, d.height - 1);
        const int tx = std::clamp(qx + du, 0, d.width - 1);
        if (census) {
          const auto a = ci.at(qy, qx);
          const auto b = cj.at(ty, tx);
          for (std::size_t k = 0; k < a.size(); ++k) c += std::abs(a[k] - b[k]);
        } else {
          c += std::abs(gi(qy, qx) - gj(ty, tx));
        }
      }
    return c;
  };

  // Offsets ordered by |du| + |dv| so ties resolve toward the seed.
  std::vector<std::pair<int, int>> offsets;
  for (int dv = -opts.radius_v; dv <= opts.radius_v; ++dv)
    for (int du = -opts.radius_u; du <= opts.radius_u; ++du) offsets.emplace_back(du, dv);
  std::stable_sort(offsets.begin(), offsets.end(), [](const auto& a, const auto& b) {
    return std::abs(a.first) + std::abs(a.second) < std::abs(b.first) + std::abs(b.second);
  });

  FlowField out(d);
  for (int y = 0; y < d.height; ++y)
    for (int x = 0; x < d.width; ++x) {
      const int su = opts.seed ? static_cast<int>(std::lround(opts.seed->u()(y, x))) : 0;
      const int sv = opts.seed && opts.radius_v > 0 ? static_cast<int>(std::lround(opts.seed->v()(y, x))) : 0;
      double best = std::numeric_limits<double>::infinity();
      int bu = su, bv = sv;
      for (const auto& [du, dv] : offsets) {
        const double c = cost(y, x, su + du, sv + dv);
        if (c < best) {
          best = c;
          bu = su + du;
          bv = sv + dv;
        }
      }
      double fu = bu, fv = bv;
      if (opts.subpixel) {
        // Parabola through the neighbours along each axis.
        auto vertex = [](double cm, double c0, double cp) {
          const double den = cm - 2.0 * c0 + cp;
          return den > 0.0 ? std::clamp(0.5 * (cm - cp) / den, -0.5, 0.5) : 0.0;
        };
        fu += vertex(cost(y, x, bu - 1, bv), best, cost(y, x, bu + 1, bv));
        if (opts.radius_v > 0) fv += vertex(cost(y, x, bu, bv - 1), best, cost(y, x, bu, bv + 1));
      }
      out.u()(y, x) = fu;
      out.v()(y, x) = fv;
    }
  return out;
}

FlowField match_coarse_to_fine(const Pyramid<Image>& from, const Pyramid<Image>& to, double radius, bool vertical,
                               int box, const LossConfig& cfg) {
  if (from.size() != to.size() || from.size() == 0) throw std::invalid_argument("match_coarse_to_fine: pyramid mismatch");
  const int top = static_cast<int>(from.size()) - 1;
  FlowField f;
  for (int level = top; level >= 0; --level) {
    MatchOptions o;
    o.box = box;
    o.subpixel = level == 0;
    if (level == top) {
      const int r = static_cast<int>(std::ceil(radius / std::ldexp(1.0, top)));
      o.radius_u = r;
      o.radius_v = vertical ? r : 0;
    } else {
      f = upsample_flow(f, from[level].height(), from[level].width());
      o.radius_u = 1;
      o.radius_v = vertical ? 1 : 0;
      o.seed = &f;
    }
    f = block_match(from[level], to[level], o, cfg);
  }
  return f;
}

// ---------------------------------------------------------------------------

TeacherResult solve_teacher(const QuadSet& quadset, const SolverConfig& solver, const LossConfig& loss,
                            const ConsistencyConfig& consistency, TermToggles toggles, const FlowBundle* init) {
  quadset.validate();
  solver.validate();
  loss.validate();
  consistency.validate();
  const Dims full = quadset.dims();
  const int levels = usable_levels(full, solver.pyramid_levels, loss.census_window);

  std::array<Pyramid<Image>, kNumViews> pyramids;
  for (int v = 0; v < kNumViews; ++v) {
    const Image& img = quadset.images[v];
    pyramids[v] = build_pyramid(img.channels() == 1 ? img : to_grayscale(img), levels);
  }

  auto make_level = [&](int level, Dims d) {
    std::array<Image, kNumViews> imgs;
    for (int v = 0; v < kNumViews; ++v) {
      imgs[v] = pyramids[v][level];
      require_same_dims(imgs[v].dims(), d, "teacher pyramid level");
    }
    auto objective = std::make_shared<TeacherObjective>(std::move(imgs), loss, toggles);
    auto conf = std::make_shared<ConfidenceSet>(ConfidenceSet::all_ones(d));
    const double lambda_s = solver.lambda_s;
    LevelProblem p;
    p.refresh = [conf, consistency](const FlowBundle& b) { *conf = bundle_confidence(b, consistency); };
    p.evaluate = [objective, conf, lambda_s, loss](const FlowBundle& b, FlowBundle* grad, FlowBundle* curv) {
      LossReport r = objective->evaluate(b, *conf, grad, curv);
      FlowBundle sgrad, scurv;
      if (grad) sgrad = FlowBundle(b.dims(), b.rectified());
      if (curv) scurv = FlowBundle(b.dims(), b.rectified());
      r.smoothness = smoothness_loss(b, loss, grad ? &sgrad : nullptr, curv ? &scurv : nullptr);
      if (grad) add_scaled(*grad, sgrad, lambda_s);
      if (curv) add_scaled(*curv, scurv, lambda_s);
      r.lambda_s = lambda_s;
      r.objective = r.total + lambda_s * *r.smoothness;
      return r;
    };
    return p;
  };

  TeacherResult out;
  DescentOptions opts;
  opts.levels = levels;
  opts.init = init;
  FlowBundle seed;
  if (!init && solver.match_init) {
    seed = FlowBundle(full, true);
    for (int k = 0; k < kNumDirections; ++k) {
      const auto [from, to] = kDirections[k];
      seed[k] = match_coarse_to_fine(pyramids[from - 1], pyramids[to - 1], solver.match_radius,
                                     !is_stereo_pair(from, to), solver.match_box, loss);
    }
    opts.init = &seed;
  }
  out.bundle = descend_coarse_to_fine(full, solver, opts, make_level, &out.trace);
  out.confidence = bundle_confidence(out.bundle, consistency);
  return out;
}

kitti::MetricsReport evaluate_bundle(const FlowBundle& pred, const GroundTruth& gt) {
  require_same_dims(pred.dims(), gt.bundle.dims(), "evaluate_bundle");
  kitti::MetricsAccumulator acc;
  const Mask valid = Mask::ones(pred.dims());
  for (int k = 0; k < kNumDirections; ++k) acc.add(pred[k], gt.bundle[k], valid, gt.covisible[k]);
  return acc.report();
}

kitti::MetricsReport evaluate_field(const FlowBundle& pred, const GroundTruth& gt, int direction) {
  require_same_dims(pred.dims(), gt.bundle.dims(), "evaluate_field");
  return kitti::evaluate(pred[direction], gt.bundle[direction], Mask::ones(pred.dims()), gt.covisible[direction]);
}

std::vector<AblationRow> ablate(const QuadSet& quadset, const GroundTruth& gt, const std::vector<TermToggles>& sets,
                                const SolverConfig& solver, const LossConfig& loss,
                                const ConsistencyConfig& consistency) {
  for (const TermToggles& t : sets)
    if (!t.lp) throw std::invalid_argument("ablate: the photometric term cannot be disabled");
  std::vector<AblationRow> rows;
  for (const TermToggles& t : sets) {
    const TeacherResult r = solve_teacher(quadset, solver, loss, consistency, t);
    rows.push_back({t, evaluate_bundle(r.bundle, gt), r.trace.empty() ? LossReport{} : r.trace.back()});
  }
  return rows;
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  std::string s;
  char line[256];
  std::snprintf(line, sizeof(line), "%-4s %-4s %-4s %9s %9s %9s %8s\n", "Lp", "Lq", "Lt", "EPE-all", "EPE-noc",
                "EPE-occ", "Fl-noc");
  s += line;
  auto num = [](const std::optional<double>& v, double scale) {
    char b[32];
    if (!v) return std::string("-");
    std::snprintf(b, sizeof(b), "%.4f", *v * scale);
    return std::string(b);
  };
  auto mark = [](bool on) { return on ? "x" : ""; };
  for (const AblationRow& r : rows) {
    std::snprintf(line, sizeof(line), "%-4s %-4s %-4s %9s %9s %9s %7s%%\n", mark(r.toggles.lp), mark(r.toggles.lq),
                  mark(r.toggles.lt), num(r.metrics.all.epe, 1).c_str(), num(r.metrics.noc.epe, 1).c_str(),
                  num(r.metrics.occ.epe, 1).c_str(), num(r.metrics.noc.outlier, 100).c_str());
    s += line;
  }
  return s;
}

}  // namespace quadflow
