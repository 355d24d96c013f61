// Copyright 2026 The anicl Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>
#include <string>

#include "core/error.hpp"

namespace anicl {

using Vec = Eigen::VectorXd;
// Batches are stored one sample per row (n x d).
using Mat = Eigen::MatrixXd;

// Tolerance for "this point lies on the unit sphere" checks (f64).
inline constexpr double kUnitNormTol = 1e-9;

inline bool is_unit(const Vec& v, double tol = kUnitNormTol) {
  return std::abs(v.norm() - 1.0) <= tol;
}

// Diagonal positive concentration matrix. Covers the ground-truth weights,
// the positive/negative conditionals of hard-negative sampling, and
// materialized learned weights alike.
struct ConcentrationMatrix {
  Vec diag;

  ConcentrationMatrix() = default;
  explicit ConcentrationMatrix(Vec d) : diag(std::move(d)) { validate(); }

  static ConcentrationMatrix isotropic(int dim, double value) {
    return ConcentrationMatrix(Vec::Constant(dim, value));
  }

  int dim() const { return static_cast<int>(diag.size()); }
  double max_entry() const { return diag.maxCoeff(); }
  double min_entry() const { return diag.minCoeff(); }

  void validate() const {
    require_arg(diag.size() > 0, "concentration matrix must be non-empty");
    require_arg((diag.array() > 0.0).all(),
                "concentration entries must be strictly positive");
  }
};

}  // namespace anicl
