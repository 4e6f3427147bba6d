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
#include "commands.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "checkgrad.hpp"
#include "dataset.hpp"
#include "quadflow/kitti_io.hpp"
#include "quadflow/optimize.hpp"
#include "quadflow/scene.hpp"
#include "quadflow/selfsup.hpp"

namespace fs = std::filesystem;

namespace quadflow::cli {
namespace {

using Clock = std::chrono::steady_clock;

std::string require_dir_arg(const std::string& v, const char* flag) {
  if (v.empty()) throw ConfigError(std::string("missing ") + flag);
  return v;
}

void make_out_dir(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw std::runtime_error("cannot create " + out + ": " + ec.message());
}

TermToggles parse_toggles(const std::string& list) {
  TermToggles t{false, false, false};
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "lp") t.lp = true;
    else if (item == "lq") t.lq = true;
    else if (item == "lt") t.lt = true;
    else if (!item.empty()) throw ConfigError("unknown --toggle '" + item + "' (lp, lq, lt)");
  }
  if (!t.lp) throw ConfigError("--toggle must include lp");
  return t;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

std::string path_in(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

struct Run {
  Options opts;
  KeyValues snapshot;
  std::vector<std::string> outputs;
  Clock::time_point start = Clock::now();

  void finish() {
    Manifest m;
    m.options = opts;
    m.config = snapshot.entries();
    m.outputs = outputs;
    m.version = code_version();
    m.wall_time_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    write_manifest(opts.out, m);
  }
};

std::vector<std::pair<std::string, kitti::MetricsReport>> per_direction(const FlowBundle& b, const GroundTruth& gt) {
  std::vector<std::pair<std::string, kitti::MetricsReport>> rows;
  for (int k = 0; k < kNumDirections; ++k) rows.emplace_back(direction_name(kDirections[k]), evaluate_field(b, gt, k));
  return rows;
}

// Left-view disparity from a stereo field: d = -u where it fits the codec.
std::pair<DisparityField, Mask> disparity_of(const FlowField& stereo) {
  DisparityField d(stereo.dims());
  Mask valid(stereo.dims(), 0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double v = -stereo.u().values()[i];
    if (v >= 1.0 / 256.0 && v < 255.0) {
      d.values()[i] = v;
      valid.values()[i] = 1;
    }
  }
  return {d, valid};
}

int cmd_synth(Run& run) {
  Options& o = run.opts;
  require_dir_arg(o.out, "--out");
  SceneConfig cfg = SceneConfig::from_key_values(o.config);
  o.config.require_all_consumed();
  if (o.seed) cfg.seed = *o.seed;
  cfg.validate();
  cfg.to_key_values(run.snapshot);

  make_out_dir(o.out);
  spdlog::info("synth: seed {} {}x{}", cfg.seed, cfg.width, cfg.height);
  const Scene scene = generate_scene(cfg.seed, cfg);
  const auto [quadset, gt] = render_quadset(scene);
  run.outputs = write_quadset(o.out, quadset);
  const auto gt_files = write_ground_truth(o.out, gt);
  run.outputs.insert(run.outputs.end(), gt_files.begin(), gt_files.end());
  run.finish();
  return kExitOk;
}

int cmd_teach(Run& run) {
  Options& o = run.opts;
  require_dir_arg(o.in, "--in");
  require_dir_arg(o.out, "--out");
  SolverConfig solver = SolverConfig::from_key_values(o.config);
  const LossConfig loss = LossConfig::from_key_values(o.config);
  const ConsistencyConfig consistency = ConsistencyConfig::from_key_values(o.config);
  o.config.require_all_consumed();
  if (o.seed) solver.init_seed = *o.seed;
  solver.validate();
  loss.validate();
  consistency.validate();
  const TermToggles toggles = parse_toggles(o.toggles);
  solver.to_key_values(run.snapshot);
  loss.to_key_values(run.snapshot);
  consistency.to_key_values(run.snapshot);

  const QuadSet quadset = read_quadset(o.in);
  make_out_dir(o.out);
  spdlog::info("teach: {} on {}", toggles.to_string(), to_string(quadset.dims()));
  const TeacherResult result = solve_teacher(quadset, solver, loss, consistency, toggles);

  run.outputs = write_bundle(o.out, result.bundle, &result.confidence);
  const auto [disp_t, valid_t] = disparity_of(result.bundle.at(1, 2));
  const auto [disp_t1, valid_t1] = disparity_of(result.bundle.at(3, 4));
  kitti::save_disp_png(path_in(o.out, "disp_t.png"), disp_t, valid_t);
  kitti::save_disp_png(path_in(o.out, "disp_t1.png"), disp_t1, valid_t1);
  run.outputs.insert(run.outputs.end(), {"disp_t.png", "disp_t1.png"});

  std::string trace = loss_csv_header() + "\n";
  for (const LossReport& r : result.trace) trace += to_csv_row(r) + "\n";
  write_text(path_in(o.out, "trace.csv"), trace);
  run.outputs.push_back("trace.csv");

  if (has_ground_truth(o.in)) {
    const GroundTruth gt = read_ground_truth_bundle(o.in);
    AblationRow row{toggles, evaluate_bundle(result.bundle, gt), result.trace.empty() ? LossReport{} : result.trace.back()};
    std::fputs(format_ablation_table({row}).c_str(), stdout);
    kitti::write_metrics_csv(path_in(o.out, "metrics.csv"), per_direction(result.bundle, gt), row.metrics);
    run.outputs.push_back("metrics.csv");
  }
  run.finish();
  return kExitOk;
}

int cmd_selfsup(Run& run) {
  Options& o = run.opts;
  require_dir_arg(o.teacher, "--teacher");
  require_dir_arg(o.out, "--out");
  const SolverConfig solver = SolverConfig::from_key_values(o.config);
  const LossConfig loss = LossConfig::from_key_values(o.config);
  SelfsupConfig cfg = SelfsupConfig::from_key_values(o.config);
  o.config.require_all_consumed();
  if (o.seed) cfg.proxy_seed = *o.seed;
  std::vector<SelfsupVariant> variants;
  for (const std::string& v : o.variants) variants.push_back(parse_selfsup_variant(v));
  if (variants.empty()) variants.push_back(cfg.variant);
  solver.validate();
  loss.validate();
  cfg.validate();
  solver.to_key_values(run.snapshot);
  loss.to_key_values(run.snapshot);
  cfg.to_key_values(run.snapshot);

  const FlowBundle teacher = read_bundle(o.teacher);
  const ConfidenceSet conf = read_confidence(o.teacher);
  std::optional<GroundTruth> gt;
  if (!o.gt.empty()) gt = read_ground_truth_bundle(o.gt);
  else if (!o.in.empty() && has_ground_truth(o.in)) gt = read_ground_truth_bundle(o.in);
  if (gt) require_same_dims(gt->bundle.dims(), teacher.dims(), "selfsup ground truth");

  make_out_dir(o.out);
  std::string table = "variant,epe_all,epe_noc,epe_occ,fl_all,fl_noc\n";
  auto num = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (SelfsupVariant v : variants) {
    SelfsupConfig vc = cfg;
    vc.variant = v;
    const std::string tag = to_string(v);
    spdlog::info("selfsup: {}", tag);
    const SelfsupRun result = run_selfsup(teacher, conf, teacher.dims(), vc, solver, loss);
    const std::string dir = path_in(o.out, tag);
    make_out_dir(dir);
    for (const std::string& f : write_bundle(dir, result.student.bundle, nullptr)) run.outputs.push_back(tag + "/" + f);
    table += tag;
    if (gt) {
      const kitti::MetricsReport m = evaluate_bundle(result.student.bundle, *gt);
      table += "," + num(m.all.epe) + "," + num(m.noc.epe) + "," + num(m.occ.epe) + "," + num(m.all.outlier) + "," +
               num(m.noc.outlier);
    } else {
      table += ",,,,,";
    }
    table += "\n";
  }
  write_text(path_in(o.out, "variants.csv"), table);
  run.outputs.push_back("variants.csv");
  if (gt) std::fputs(table.c_str(), stdout);
  run.finish();
  return kExitOk;
}

int cmd_eval(Run& run) {
  Options& o = run.opts;
  require_dir_arg(o.pred, "--pred");
  require_dir_arg(o.gt, "--gt");
  o.config.require_all_consumed();
  const LoadedTruth pred = read_truth(o.pred, o.pred_prefix);
  const LoadedTruth truth = read_truth(o.gt, o.gt_prefix);

  std::vector<std::pair<std::string, kitti::MetricsReport>> rows;
  kitti::MetricsAccumulator pooled;
  for (int k = 0; k < kNumDirections; ++k) {
    require_same_dims(pred.flow[k].dims(), truth.flow[k].dims(), "eval");
    const Mask noc = truth.noc[k] ? (*truth.noc[k] & truth.valid[k]) : truth.valid[k];
    rows.emplace_back(direction_name(kDirections[k]), kitti::evaluate(pred.flow[k], truth.flow[k], truth.valid[k], noc));
    pooled.add(pred.flow[k], truth.flow[k], truth.valid[k], noc);
  }
  const kitti::MetricsReport aggregate = pooled.report();

  std::vector<std::pair<std::string, kitti::MetricsReport>> disp_rows;
  for (const auto& [name, stereo] : {std::pair<std::string, std::string>{"disp_t", "1_2"}, {"disp_t1", "3_4"}}) {
    const fs::path p = fs::path(o.pred) / (name + ".png");
    const fs::path g = fs::path(o.gt) / ("gt_" + name + ".png");
    if (!fs::exists(p) || !fs::exists(g)) continue;
    const auto [pd, pv] = kitti::load_disp_png(p.string());
    const auto [gd, gv] = kitti::load_disp_png(g.string());
    require_same_dims(pd.dims(), gd.dims(), "eval disparity");
    const fs::path cov = fs::path(o.gt) / ("gt_covisible_" + stereo + ".png");
    const Mask noc = fs::exists(cov) ? load_mask_png(cov.string()) & gv : gv;
    disp_rows.emplace_back(name, kitti::evaluate(pd, gd, gv, noc));
  }

  auto table_rows = rows;
  table_rows.emplace_back("aggregate", aggregate);
  std::fputs(kitti::format_metrics_table(table_rows).c_str(), stdout);
  if (!disp_rows.empty()) std::fputs(kitti::format_metrics_table(disp_rows).c_str(), stdout);

  if (!o.out.empty()) {
    make_out_dir(o.out);
    kitti::write_metrics_csv(path_in(o.out, "metrics.csv"), rows, aggregate);
    run.outputs.push_back("metrics.csv");
    if (!disp_rows.empty()) {
      kitti::write_metrics_csv(path_in(o.out, "disparity_metrics.csv"), disp_rows);
      run.outputs.push_back("disparity_metrics.csv");
    }
    run.finish();
  }
  return kExitOk;
}

int cmd_viz(Run& run) {
  Options& o = run.opts;
  require_dir_arg(o.out, "--out");
  o.config.require_all_consumed();
  std::vector<fs::path> inputs;
  if (!o.flow.empty()) {
    inputs.emplace_back(o.flow);
  } else {
    require_dir_arg(o.in, "--flow or --in");
    for (const Direction& d : kDirections) {
      const fs::path p = fs::path(o.in) / flow_file(o.pred_prefix, d);
      if (fs::exists(p)) inputs.push_back(p);
    }
    if (inputs.empty()) throw std::runtime_error("viz: no " + o.pred_prefix + "*.png files in " + o.in);
  }
  make_out_dir(o.out);
  for (const fs::path& p : inputs) {
    const auto [flow, valid] = kitti::load_flow_png(p.string());
    const std::string name = p.stem().string() + "_color.png";
    save_png(kitti::flow_to_color(flow, o.max_mag), path_in(o.out, name));
    run.outputs.push_back(name);
  }
  run.finish();
  return kExitOk;
}

int cmd_checkgrad(Run& run) {
  Options& o = run.opts;
  o.config.require_all_consumed();
  if (o.instances <= 0) throw ConfigError("--instances must be positive");
  const auto rows = run_gradient_check(o.instances, o.seed.value_or(0));
  bool ok = true;
  std::string csv = "loss,max_relative_error,checked\n";
  std::printf("%-11s %14s %8s\n", "loss", "max rel err", "checked");
  for (const GradCheckRow& r : rows) {
    std::printf("%-11s %14.3e %8zu\n", r.loss.c_str(), r.max_relative_error, r.checked);
    csv += r.loss + "," + format_double(r.max_relative_error) + "," + std::to_string(r.checked) + "\n";
    ok = ok && r.max_relative_error < 1e-4;
  }
  if (!o.out.empty()) {
    make_out_dir(o.out);
    write_text(path_in(o.out, "checkgrad.csv"), csv);
    run.outputs.push_back("checkgrad.csv");
    run.finish();
  }
  return ok ? kExitOk : kExitNumeric;
}

}  // namespace

int run_command(Options opts) {
  if (opts.config_path) {
    KeyValues file = KeyValues::load(*opts.config_path);
    for (const auto& [k, v] : opts.config.entries()) file.set(k, v);
    opts.config = file;
  }
  Run run{opts, {}, {}};
  const std::string& c = opts.command;
  if (c == "synth") return cmd_synth(run);
  if (c == "teach") return cmd_teach(run);
  if (c == "selfsup") return cmd_selfsup(run);
  if (c == "eval") return cmd_eval(run);
  if (c == "viz") return cmd_viz(run);
  if (c == "checkgrad") return cmd_checkgrad(run);
  throw ConfigError("unknown command '" + c + "'");
}

int replay(const std::string& manifest_path, const std::string& out_override) {
  const Manifest m = read_manifest(manifest_path);
  Options opts = m.options;
  // The snapshot already holds every effective value, file and flags alike.
  opts.config_path.reset();
  opts.config = KeyValues{};
  for (const auto& [k, v] : m.config) opts.config.set(k, v);
  if (!out_override.empty()) opts.out = out_override;
  if (m.version != code_version())
    spdlog::warn("replay: manifest written by version {}, running {}", m.version, code_version());
  return run_command(std::move(opts));
}

}  // namespace quadflow::cli
