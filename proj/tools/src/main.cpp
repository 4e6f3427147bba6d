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
#include <spdlog/cfg/helpers.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>

#ifdef QUADFLOW_HAVE_OPENMP
#include <omp.h>
#endif

#include "commands.hpp"
#include "quadflow/optimize.hpp"

namespace {

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("quadflow");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("FLOW2STEREO_LOG")) spdlog::cfg::helpers::load_levels(env);
}

void set_threads(int n) {
#ifdef QUADFLOW_HAVE_OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  if (n > 1) spdlog::warn("built without OpenMP; --threads {} ignored", n);
#endif
}

}  // namespace

int main(int argc, char** argv) {
  using namespace quadflow;
  using namespace quadflow::cli;
  setup_logging();

  CLI::App app{"quadflow: joint flow and stereo estimation over four views"};
  app.require_subcommand(1);
  app.set_version_flag("--version", code_version());

  Options opts;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  std::string manifest_path;

  auto common = [&](CLI::App* sub, bool with_seed) {
    sub->add_option("--config", opts.config_path, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--set", overrides, "config override key=value (repeatable)");
    sub->add_option("--threads", opts.threads, "worker threads")->check(CLI::PositiveNumber);
    if (with_seed) sub->add_option("--seed", seed, "seed for every random choice of the command");
  };

  auto* synth = app.add_subcommand("synth", "render a synthetic quadset with ground truth");
  common(synth, true);
  synth->add_option("--out", opts.out, "output directory")->required();

  auto* teach = app.add_subcommand("teach", "estimate the 12 flow fields of a quadset");
  common(teach, true);
  teach->add_option("--in", opts.in, "quadset directory")->required()->check(CLI::ExistingDirectory);
  teach->add_option("--out", opts.out, "output directory")->required();
  teach->add_option("--toggle", opts.toggles, "loss terms, comma separated subset of lp,lq,lt");

  auto* selfsup = app.add_subcommand("selfsup", "distil a teacher bundle into a student");
  common(selfsup, true);
  selfsup->add_option("--teacher", opts.teacher, "teach output directory")->required()->check(CLI::ExistingDirectory);
  selfsup->add_option("--variant", opts.variants, "v1, v2, v3 or v4 (repeatable)");
  selfsup->add_option("--in", opts.in, "quadset directory, for ground truth");
  selfsup->add_option("--gt", opts.gt, "ground truth directory");
  selfsup->add_option("--out", opts.out, "output directory")->required();

  auto* eval = app.add_subcommand("eval", "EPE and outlier rates of predicted flow PNGs");
  common(eval, false);
  eval->add_option("--pred", opts.pred, "prediction directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--gt", opts.gt, "ground truth directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--pred-prefix", opts.pred_prefix, "prediction file prefix");
  eval->add_option("--gt-prefix", opts.gt_prefix, "ground truth file prefix");
  eval->add_option("--out", opts.out, "write metrics.csv and a manifest here");

  auto* viz = app.add_subcommand("viz", "color-code flow PNGs");
  common(viz, false);
  viz->add_option("--flow", opts.flow, "single flow PNG");
  viz->add_option("--in", opts.in, "directory of flow PNGs");
  viz->add_option("--prefix", opts.pred_prefix, "flow file prefix inside --in");
  viz->add_option("--max-mag", opts.max_mag, "magnitude of full saturation");
  viz->add_option("--out", opts.out, "output directory")->required();

  auto* checkgrad = app.add_subcommand("checkgrad", "finite-difference check of every loss gradient");
  common(checkgrad, true);
  checkgrad->add_option("--instances", opts.instances, "random 16x16 instances");
  checkgrad->add_option("--out", opts.out, "write checkgrad.csv and a manifest here");

  auto* replay_cmd = app.add_subcommand("replay", "rerun a command from its manifest");
  replay_cmd->add_option("--manifest", manifest_path, "manifest.json")->required()->check(CLI::ExistingFile);
  replay_cmd->add_option("--out", opts.out, "output directory override");
  replay_cmd->add_option("--threads", opts.threads, "worker threads")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    opts.command = sub->get_name();
    if (opts.command == "replay") {
      // --threads changes scheduling only; outputs do not depend on it.
      set_threads(opts.threads);
      return replay(manifest_path, opts.out);
    }
    if (sub->get_option_no_throw("--seed") && sub->count("--seed")) opts.seed = seed;
    for (const std::string& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + kv + "'");
      opts.config.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    set_threads(opts.threads);
    return run_command(opts);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}
