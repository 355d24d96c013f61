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

#include "core/rng.hpp"
#include "core/sphere.hpp"
#include "core/tape.hpp"
#include "core/types.hpp"

namespace anicl {

enum class LossKind { kInfoNce, kAnInfoNce, kEnsemble };

// Negative-set layout shared by all losses: either the other anchors of the
// batch (in-batch), or an explicit grouped block of M rows per anchor, or
// both (in-batch plus appended per-anchor extras, as used by hard-negative
// finetuning).
struct NegativeSet {
  bool in_batch = true;
  NodeId grouped = -1;  // (n*M) x d node, or -1
  bool has_grouped() const { return grouped >= 0; }
};

// Tape-level loss graph plus value-side diagnostics.
struct LossNodes {
  NodeId loss = -1;        // scalar
  NodeId per_anchor = -1;  // n x 1
  double mean_pos_sim = 0.0;
  double mean_neg_sim = 0.0;
};

// Softmax cross-entropy with dot-product similarity at temperature tau.
LossNodes infonce_graph(GradientTape& tape, NodeId anchors_emb,
                        NodeId positives_emb, const NegativeSet& negatives,
                        double tau);

// Same head with similarity -(a-b)^T diag(lam) (a-b); lam_node is the
// materialized (d x 1) positive scaling, typically exp(log_diag).
LossNodes aninfonce_graph(GradientTape& tape, NodeId anchors_emb,
                          NodeId positives_emb, const NegativeSet& negatives,
                          NodeId lam_node);

// Scalar value + per-anchor terms + diagnostics, for non-training paths.
struct LossValue {
  double value = 0.0;
  Vec per_anchor;
  double mean_pos_sim = 0.0;
  double mean_neg_sim = 0.0;
};

// negatives: empty matrix means in-batch (rows of `anchors` other than i);
// otherwise (n*M) x d grouped per anchor.
LossValue infonce_loss(const Mat& anchors_emb, const Mat& positives_emb,
                       const Mat& negatives_emb, double tau);
LossValue aninfonce_loss(const Mat& anchors_emb, const Mat& positives_emb,
                         const Mat& negatives_emb,
                         const ConcentrationMatrix& lam_hat);

// Sum of per-process losses for k batches embedded by a shared encoder.
// Used at the graph level by the trainer; the value-level helper sums
// aninfonce_loss over matched (batch, lam) pairs.
LossValue ensemble_loss(const std::vector<Mat>& anchors_emb,
                        const std::vector<Mat>& positives_emb,
                        const std::vector<Mat>& negatives_emb,
                        const std::vector<ConcentrationMatrix>& lam_hats);

// Monte-Carlo estimate of the minimal attainable contrastive loss for the
// anchored-conditional process: anchors uniform, positives from the lam_pos
// conditional, negatives uniform or from the lam_neg conditional, scored by
// the true density ratio with lam_eff = lam_pos - lam_neg.
struct OracleEstimate {
  double value = 0.0;
  double std_error = 0.0;
  long n_draws = 0;
};

OracleEstimate bayes_optimal_loss(const ConcentrationMatrix& lam_pos,
                                  const std::optional<ConcentrationMatrix>& lam_neg,
                                  int m_negatives, int d, long n_mc,
                                  RngStream rng, bool allow_degenerate = false,
                                  const McmcOptions& mcmc = {});

}  // namespace anicl
