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

#include <optional>
#include <vector>

#include "core/mlp.hpp"
#include "core/rng.hpp"
#include "core/sphere.hpp"
#include "core/types.hpp"

namespace anicl {

// Square invertible MLP used as the generative map from latents to
// observations (same input, intermediate, and output dimensionality).
struct GeneratorSpec {
  int d = 10;
  int n_layers = 3;
  double leaky_slope = 0.2;
  double max_condition_number = 25.0;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class MarginalKind { kUniform, kVmfMixture };

// Anchor marginal: uniform, or a mixture that draws from vMF(pole, kappa)
// with probability alpha and from the uniform law otherwise.
struct MarginalSpec {
  MarginalKind kind = MarginalKind::kUniform;
  VmfParams vmf;       // used by kVmfMixture
  double alpha = 1.0;  // mixture weight of the vMF component

  void validate(int d) const;
};

struct DgpSpec {
  int d = 10;
  ConcentrationMatrix lam_pos;
  std::optional<ConcentrationMatrix> lam_neg;  // hard negatives when present
  GeneratorSpec generator;
  ConditionalMethod conditional_method = ConditionalMethod::kProjectedGaussian;
  MarginalSpec marginal;
  McmcOptions mcmc;

  void validate() const;
};

// Marker for "negatives are the other anchors in the batch"; negatives are
// materialized by the loss layer in that case.
inline constexpr int kInBatchNegatives = -1;

struct LatentBatch {
  Mat anchors;    // N x d
  Mat positives;  // N x d
  // (N*M) x d grouped by anchor when n_negatives >= 0; empty for in-batch.
  Mat negatives;
  int negatives_per_anchor = kInBatchNegatives;

  int size() const { return static_cast<int>(anchors.rows()); }
  bool in_batch_negatives() const {
    return negatives_per_anchor == kInBatchNegatives;
  }
};

struct ObservationBatch {
  Mat anchors;
  Mat positives;
  Mat negatives;
  int negatives_per_anchor = kInBatchNegatives;
  LatentBatch latents;  // originating latents, kept for evaluation

  bool in_batch_negatives() const {
    return negatives_per_anchor == kInBatchNegatives;
  }
};

// k data-generating processes sharing one generator but with distinct
// concentration parameters.
struct EnsembleDgp {
  GeneratorSpec generator;
  std::vector<ConcentrationMatrix> lams;

  void validate() const;
};

// Builds the square invertible generator: rotation-like init, resampled
// until every layer's condition number is within spec. Biases are zero.
MlpNetwork make_generator(const GeneratorSpec& spec);

// Exact inverse of a make_generator network: reverse layer order, invert
// LeakyReLU coordinate-wise, solve each linear system.
Vec invert_generator(const MlpNetwork& gen, const Vec& x);
Mat invert_generator_batch(const MlpNetwork& gen, const Mat& xs);

// Draws anchor marginals.
Mat sample_marginal(const MarginalSpec& marginal, int d, int n, RngStream rng);

// Anchors from the marginal, positives from the anchored conditional
// (lam_pos), negatives uniform when lam_neg is absent or from the lam_neg
// conditional otherwise. n_negatives = kInBatchNegatives emits the marker.
LatentBatch sample_latent_batch(const DgpSpec& dgp, int n_anchors,
                                int n_negatives, RngStream rng);

// Element-wise application of the generator; the latent handle is retained.
ObservationBatch generate_observations(const MlpNetwork& gen,
                                       const LatentBatch& batch);

}  // namespace anicl
