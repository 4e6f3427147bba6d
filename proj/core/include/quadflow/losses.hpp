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

#include <array>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "quadflow/config.hpp"
#include "quadflow/field.hpp"
#include "quadflow/geometry.hpp"
#include "quadflow/warp.hpp"

namespace quadflow {

enum class PhotometricMode { kCensus, kRaw };
enum class SelfsupNorm { kComponentwise, kVector };

struct LossConfig {
  double epsilon = 0.01;
  double q = 0.4;
  double lambda1 = 0.1;  // quadrilateral weight
  double lambda2 = 0.2;  // triangle weight
  int census_window = 7;
  double census_soft_scale = 0.81;  // intensity^2, images in [0,1]
  PhotometricMode photometric = PhotometricMode::kCensus;
  std::vector<TriangleRoute> triangle_routes{TriangleRoute::kViaStereo};
  std::vector<int> anchors{1, 2, 3, 4};
  SelfsupNorm selfsup_norm = SelfsupNorm::kComponentwise;

  void validate() const;  // throws ConfigError
  static LossConfig from_key_values(const KeyValues& kv);
  void to_key_values(KeyValues& kv) const;
};

/// Raised when a masked mean has an empty mask.
class UndefinedTermError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// psi(x) = (|x| + epsilon)^q and its derivative sign(x) q (|x| + epsilon)^(q-1).
double psi(double x, const LossConfig& cfg);
double psi_derivative(double x, const LossConfig& cfg);
Plane psi(const Plane& p, const LossConfig& cfg);

/// Soft census: per pixel, d/sqrt(s + d^2) for every neighbor-minus-center
/// difference d in the window (center excluded, neighbors clamped to the
/// border), row-major over the window.
class CensusField {
 public:
  CensusField() = default;
  CensusField(Dims d, int window);

  Dims dims() const { return dims_; }
  int window() const { return window_; }
  int taps() const { return window_ * window_ - 1; }
  std::span<double> at(int y, int x) { return {data_.data() + offset(y, x), static_cast<std::size_t>(taps())}; }
  std::span<const double> at(int y, int x) const {
    return {data_.data() + offset(y, x), static_cast<std::size_t>(taps())};
  }

 private:
  std::size_t offset(int y, int x) const {
    return (static_cast<std::size_t>(y) * dims_.width + x) * static_cast<std::size_t>(taps());
  }
  Dims dims_{};
  int window_ = 0;
  std::vector<double> data_;
};

// Single-channel input; throws std::invalid_argument if the window exceeds the image.
CensusField census_descriptor(const Image& img, const LossConfig& cfg);

struct LossTerm {
  double value = 0.0;
  std::size_t count = 0;  // confident pixels in the denominator
};

// Gradient arguments, when non-null, are accumulated into (+=), never reset.
// `curvature` receives a nonnegative per-component diagonal of a quadratic
// majorizer of the loss (psi'(r)/r weighting of each squared residual
// sensitivity); solvers use it as a preconditioner. It is not an exact
// Hessian diagonal.

// Masked mean over p of sum_k psi(census_k(I_i)(p) - census_k(warp(I_j, w))(p)).
LossTerm photometric_loss(const Image& image_i, const Image& image_j, const FlowField& w, const Mask& m,
                          const LossConfig& cfg, FlowField* grad = nullptr, FlowField* curvature = nullptr);
// Same with the reference descriptor precomputed (ignored in raw mode, which
// reads `image_i` instead).
LossTerm photometric_loss(const CensusField& census_i, const Image& image_i, const Image& image_j,
                          const FlowField& w, const Mask& m, const LossConfig& cfg, FlowField* grad = nullptr, FlowField* curvature = nullptr);

// mean psi(res_u) + mean psi(res_v) over `m` for one anchor group.
LossTerm quad_loss_group(const FlowBundle& b, const Mask& m, int anchor, const LossConfig& cfg,
                         FlowBundle* grad = nullptr, FlowBundle* curvature = nullptr);
LossTerm tri_loss_group(const FlowBundle& b, const Mask& m, int anchor, TriangleRoute route,
                        const LossConfig& cfg, FlowBundle* grad = nullptr, FlowBundle* curvature = nullptr);

// Sums over the configured anchors (and routes) whose masks are nonempty;
// throws UndefinedTermError if none is.
LossTerm quad_loss(const FlowBundle& b, const ConfidenceSet& conf, const LossConfig& cfg,
                   FlowBundle* grad = nullptr, FlowBundle* curvature = nullptr);
LossTerm tri_loss(const FlowBundle& b, const ConfidenceSet& conf, const LossConfig& cfg,
                  FlowBundle* grad = nullptr, FlowBundle* curvature = nullptr);

// Masked mean of psi on the per-component differences (or of psi on the
// difference norm with SelfsupNorm::kVector).
LossTerm selfsup_loss(const FlowField& student, const FlowField& teacher, const Mask& m, const LossConfig& cfg,
                      FlowField* grad = nullptr, FlowField* curvature = nullptr);
// Sum over directions with nonempty masks; throws if all are empty.
LossTerm selfsup_loss(const FlowBundle& student, const FlowBundle& teacher,
                      const std::array<Mask, kNumDirections>& masks, const LossConfig& cfg,
                      FlowBundle* grad = nullptr, FlowBundle* curvature = nullptr);

// Sum of psi over forward differences of u and v, divided by 2 H W.
double smoothness_loss(const FlowField& w, const LossConfig& cfg, FlowField* grad = nullptr, FlowField* curvature = nullptr);
double smoothness_loss(const FlowBundle& b, const LossConfig& cfg, FlowBundle* grad = nullptr, FlowBundle* curvature = nullptr);

struct TermToggles {
  bool lp = true;
  bool lq = true;
  bool lt = true;

  std::string to_string() const;  // e.g. "lp+lq+lt"
};

struct LossReport {
  std::optional<double> lp, lq, lt, ls, smoothness;
  double total = 0.0;      // lp + l1 lq + l2 lt (teacher) or ls [+ l1 lq + l2 lt] (student)
  double objective = 0.0;  // total + lambda_s * smoothness
  double lambda1 = 0.0, lambda2 = 0.0, lambda_s = 0.0;
  std::array<std::optional<double>, kNumDirections> lp_direction, ls_direction;
  std::array<std::size_t, kNumDirections> lp_count{}, ls_count{};
  std::size_t lq_count = 0, lt_count = 0;
  int level = -1;
  int iteration = -1;
  double step = 0.0;
};

std::string loss_csv_header();
std::string to_csv_row(const LossReport& r);
std::string to_json_line(const LossReport& r);

/// Teacher objective over one pyramid level. Reference descriptors are
/// computed once at construction.
class TeacherObjective {
 public:
  TeacherObjective(std::array<Image, kNumViews> images, const LossConfig& cfg, TermToggles toggles = {});

  Dims dims() const { return images_[0].dims(); }
  // Fills total/terms; smoothness and objective are left to the caller.
  LossReport evaluate(const FlowBundle& b, const ConfidenceSet& conf, FlowBundle* grad = nullptr,
                      FlowBundle* curvature = nullptr) const;

 private:
  std::array<Image, kNumViews> images_;
  std::array<CensusField, kNumViews> census_;
  LossConfig cfg_;
  TermToggles toggles_;
};

LossReport total_teacher_loss(const FlowBundle& b, const std::array<Image, kNumViews>& images,
                              const ConfidenceSet& conf, const LossConfig& cfg, FlowBundle* grad = nullptr,
                              TermToggles toggles = {});

// dst += scale * src, field by field.
void add_scaled(FlowBundle& dst, const FlowBundle& src, double scale);

}  // namespace quadflow
