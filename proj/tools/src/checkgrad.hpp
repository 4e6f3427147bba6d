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
#include <string>
#include <vector>

namespace quadflow::cli {

struct GradCheckRow {
  std::string loss;  // lp, lq, lt, ls, smoothness
  double max_relative_error = 0.0;
  std::size_t checked = 0;
};

// Central differences (h = 1e-6) against the analytic gradients on random
// 16x16 instances. Relative error is |a - fd| / max(|a|, |fd|, 1e-3).
std::vector<GradCheckRow> run_gradient_check(int instances, std::uint64_t seed, int coordinates_per_instance = 64);

}  // namespace quadflow::cli
