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
#include "manifest.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#ifndef QUADFLOW_VERSION
#define QUADFLOW_VERSION "unknown"
#endif

namespace quadflow::cli {
using nlohmann::json;

std::string code_version() { return QUADFLOW_VERSION; }

std::string to_json_text(const Manifest& m) {
  const Options& o = m.options;
  json opts = {
      {"command", o.command},
      {"out", o.out},
      {"in", o.in},
      {"teacher", o.teacher},
      {"gt", o.gt},
      {"pred", o.pred},
      {"pred_prefix", o.pred_prefix},
      {"gt_prefix", o.gt_prefix},
      {"flow", o.flow},
      {"toggles", o.toggles},
      {"variants", o.variants},
      {"instances", o.instances},
      {"threads", o.threads},
  };
  opts["config_path"] = o.config_path ? json(*o.config_path) : json(nullptr);
  opts["seed"] = o.seed ? json(*o.seed) : json(nullptr);
  opts["max_mag"] = o.max_mag ? json(*o.max_mag) : json(nullptr);
  json j = {
      {"command", o.command},
      {"options", opts},
      {"config", m.config},
      {"outputs", m.outputs},
      {"version", m.version},
      {"wall_time_seconds", m.wall_time_seconds},
  };
  return j.dump(2) + "\n";
}

Manifest manifest_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("manifest: ") + e.what());
  }
  Manifest m;
  try {
    const json& o = j.at("options");
    Options& p = m.options;
    p.command = o.at("command").get<std::string>();
    p.out = o.value("out", "");
    p.in = o.value("in", "");
    p.teacher = o.value("teacher", "");
    p.gt = o.value("gt", "");
    p.pred = o.value("pred", "");
    p.pred_prefix = o.value("pred_prefix", p.pred_prefix);
    p.gt_prefix = o.value("gt_prefix", p.gt_prefix);
    p.flow = o.value("flow", "");
    p.toggles = o.value("toggles", p.toggles);
    p.variants = o.value("variants", p.variants);
    p.instances = o.value("instances", p.instances);
    p.threads = o.value("threads", p.threads);
    if (o.contains("config_path") && !o["config_path"].is_null()) p.config_path = o["config_path"].get<std::string>();
    if (o.contains("seed") && !o["seed"].is_null()) p.seed = o["seed"].get<std::uint64_t>();
    if (o.contains("max_mag") && !o["max_mag"].is_null()) p.max_mag = o["max_mag"].get<double>();
    m.config = j.at("config").get<std::map<std::string, std::string>>();
    m.outputs = j.value("outputs", std::vector<std::string>{});
    m.version = j.value("version", "");
    m.wall_time_seconds = j.value("wall_time_seconds", 0.0);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("manifest: ") + e.what());
  }
  return m;
}

void write_manifest(const std::string& dir, const Manifest& m) {
  const std::string path = dir + "/manifest.json";
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_json_text(m);
}

Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return manifest_from_json_text(ss.str());
}

}  // namespace quadflow::cli
