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

#include "core/rng.hpp"
#include "core/types.hpp"

namespace anicl {

// Sampling and density evaluation on the unit hypersphere S^(d-1).
// Everything here is a pure function of its arguments and RngStream.

struct VmfParams {
  Vec mean_direction;  // unit norm
  double kappa = 0.0;  // 0 means uniform

  VmfParams() = default;
  VmfParams(Vec mu, double k);
};

enum class ConditionalMethod {
  kExactMh,
  kExactRejection,
  kProjectedGaussian,
};

struct McmcOptions {
  int burn_in = 200;
  int thinning = 5;
};

// x / ||x||; rejects the zero vector.
Vec project_to_sphere(const Vec& x);
// In-place row-wise projection of a batch.
void project_rows_to_sphere(Mat& batch);

// n i.i.d. points uniform on S^(d-1), one per row.
Mat sample_uniform_sphere(int d, int n, RngStream rng);

// Unnormalized anchored density exp(-(point-anchor)^T Lam (point-anchor)).
// Equals 1 exactly when point == anchor.
double conditional_density_unnorm(const Vec& anchor, const Vec& point,
                                  const ConcentrationMatrix& lam);
// log of the above (just the negated quadratic form).
double conditional_log_density_unnorm(const Vec& anchor, const Vec& point,
                                      const ConcentrationMatrix& lam);

// Exact vMF sampling via the tangent-radial decomposition with the usual
// beta-envelope rejection step for the radial part. kappa = 0 degenerates
// to the uniform law.
Mat sample_vmf(const VmfParams& params, int n, RngStream rng);

// n draws from the anchored conditional on the sphere.
//   kExactMh:          independence Metropolis-Hastings with a vMF proposal
//                      centered at the anchor, kappa = 2 * max(Lam_ii).
//   kExactRejection:   uniform-proposal rejection; the unnormalized density
//                      is <= 1, so accepting with that probability is a
//                      valid envelope. Errors out when a warm-up probe
//                      estimates an acceptance rate below 1e-6.
//   kProjectedGaussian: ambient Gaussian with mean anchor and diagonal
//                      covariance (2*Lam)^-1, renormalized to the sphere.
//                      Approximate with respect to the anchored density.
Mat sample_conditional(const Vec& anchor, const ConcentrationMatrix& lam,
                       int n, ConditionalMethod method, RngStream rng,
                       const McmcOptions& mcmc = {});

// Single draw helpers used by batch samplers (one value consumed from rng).
Vec sample_vmf_one(const Vec& mu, double kappa, RngStream& rng);
Vec sample_conditional_one(const Vec& anchor, const ConcentrationMatrix& lam,
                           ConditionalMethod method, RngStream& rng,
                           const McmcOptions& mcmc = {});

}  // namespace anicl
