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

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "quadflow/config.hpp"

namespace quadflow::cli {

/// Everything a subcommand reads from the command line. Replay rebuilds it
/// from a manifest.
struct Options {
  std::string command;
  std::optional<std::string> config_path;
  KeyValues config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string in;
  std::string teacher;
  std::string gt;
  std::string pred;
  std::string pred_prefix = "flow_";
  std::string gt_prefix = "gt_flow_";
  std::string flow;  // viz: single flow PNG
  std::optional<double> max_mag;
  std::string toggles = "lp,lq,lt";
  std::vector<std::string> variants;  // empty: the config's variant
  int instances = 50;
  int threads = 1;
};

struct Manifest {
  Options options;
  std::map<std::string, std::string> config;  // full effective configuration
  std::vector<std::string> outputs;           // relative to the output directory
  std::string version;
  double wall_time_seconds = 0.0;
};

std::string code_version();

std::string to_json_text(const Manifest& m);
Manifest manifest_from_json_text(const std::string& text);

void write_manifest(const std::string& dir, const Manifest& m);  // <dir>/manifest.json
Manifest read_manifest(const std::string& path);

}  // namespace quadflow::cli
