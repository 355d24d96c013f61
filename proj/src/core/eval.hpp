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

#include <string>
#include <vector>

#include "core/rng.hpp"
#include "core/types.hpp"

namespace anicl {

// Ordinary least squares from predicted to target variables, fitted on the
// first 80% of rows and scored on the held-out 20%.
struct LinearFit {
  Mat map;        // d_target x d_pred
  Vec intercept;  // d_target
  Vec per_dim_r2;
  double mean_r2 = 0.0;
  int eval_samples = 0;
};

LinearFit fit_linear_map(const Mat& predicted, const Mat& target,
                         bool with_intercept = true);

// Permutation matching of diagonal concentrations: both diagonals sorted
// ascending and paired in order (optimal for one-dimensional assignment).
struct LambdaComparison {
  Vec matched_learned;  // sorted
  Vec matched_truth;    // sorted
  Vec rel_errors;       // |learned - truth| / truth per matched pair
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;
  // Global scale factor s minimizing sum (s*learned - truth)^2 and the
  // per-pair errors after applying it, reported alongside the raw errors.
  double scale = 1.0;
  Vec scaled_rel_errors;
  double max_scaled_rel_error = 0.0;
};

LambdaComparison compare_lambda(const ConcentrationMatrix& learned,
                                const ConcentrationMatrix& truth);

// Fits the best transform of the form (permutation x block-orthogonal) from
// z to h(z), where blocks group dimensions of equal (within 1% relative)
// ground-truth concentration. Residual is the mean squared mismatch per
// sample; 0 means exact block-orthogonal identification.
struct BlockOrthogonalFit {
  double residual = 0.0;
  Mat transform;                        // d x d, rows = output dims
  std::vector<std::vector<int>> blocks; // input dims grouped by lambda value
};

BlockOrthogonalFit orthogonality_residual(const Mat& z, const Mat& h,
                                          const ConcentrationMatrix& lam);

// Histograms of cosine similarities for positive and negative pairs over
// 100 fixed bins on [-1, 1]. `negatives` empty means in-batch pairs.
struct OverlapHistogram {
  std::vector<long> positive_bins;
  std::vector<long> negative_bins;
  double min_positive_sim = 0.0;
  double max_negative_sim = 0.0;
  bool disjoint = false;
};

OverlapHistogram overlap_histogram(const Mat& anchors, const Mat& positives,
                                   const Mat& negatives);

// Gradient-trained logistic regression separating two embedding sets;
// 80/20 split per class, balanced accuracy on the held-out part.
double domain_classifier_accuracy(const Mat& set_a, const Mat& set_b,
                                  RngStream rng);

// Index sets for the comparative content/style split: content = dimensions
// whose ground-truth weight lies in the upper half of [min, max]. When all
// weights agree to 1% relative, both sets cover every dimension.
struct ContentStyleSplit {
  std::vector<int> content;
  std::vector<int> style;
};

ContentStyleSplit content_style_split(const ConcentrationMatrix& lam);

// Everything the harness reports about one trained encoder.
struct EvalReport {
  double r2_all = 0.0;
  double r2_content = 0.0;
  double r2_style = 0.0;
  Vec per_dim_r2;
  int eval_samples = 0;
  double loss = 0.0;
  double loss_std_error = 0.0;
  bool has_lambda = false;
  LambdaComparison lambda_match;
  Vec lambda_hat;
  double ortho_residual = 0.0;
  double mean_pos_sim = 0.0;
  double mean_neg_sim = 0.0;

  std::string to_json() const;
};

double mean_over(const Vec& values, const std::vector<int>& idx);

}  // namespace anicl
