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

#include <string>

#include "manifest.hpp"

namespace quadflow::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

// Runs opts.command and returns the process exit code. Errors propagate as
// exceptions (ConfigError, NumericError, ...) for main to map.
int run_command(Options opts);

// Loads a manifest, optionally redirects its output directory, and reruns it.
int replay(const std::string& manifest_path, const std::string& out_override);

}  // namespace quadflow::cli
