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

#include <functional>
#include <vector>

#include "core/types.hpp"

namespace anicl {

using NodeId = int;

// Reverse-mode tape over matrix-valued nodes. One tape records one loss
// evaluation; ops append nodes, backward() runs the recorded graph in
// reverse. Matrix granularity keeps every op a handful of Eigen kernels,
// which is what makes f64 training affordable on a CPU.
//
// Shapes: batches are n x d with one sample per row; weight vectors
// (diagonal scalings) are d x 1; scalars are 1 x 1.
class GradientTape {
 public:
  GradientTape() = default;
  GradientTape(const GradientTape&) = delete;
  GradientTape& operator=(const GradientTape&) = delete;

  // Leaves. requires_grad marks trainable parameters.
  NodeId leaf(Mat value, bool requires_grad = false);

  // Y = X * W^T + 1 b^T, with X n x in, W out x in, b out x 1.
  NodeId affine(NodeId x, NodeId w, NodeId b);
  NodeId leaky_relu(NodeId x, double slope);
  // Rows projected to the unit sphere.
  NodeId row_normalize(NodeId x);
  NodeId exp_elem(NodeId x);
  NodeId scale(NodeId x, double c);
  NodeId add(NodeId x, NodeId y);

  // q_i = sum_k w_k (b_ik - a_ik)^2 for paired rows; n x 1.
  NodeId paired_sqdist(NodeId a, NodeId b, NodeId w);
  // Q_ij = sum_k w_k (a_jk - a_ik)^2 over all row pairs; n x n.
  NodeId pairwise_sqdist(NodeId a, NodeId w);
  // Q_im = sum_k w_k (negs_{i*M+m,k} - a_ik)^2, negs grouped by anchor; n x M.
  NodeId grouped_sqdist(NodeId a, NodeId negs, NodeId w);

  // s_i = a_i . b_i; n x 1.
  NodeId paired_dot(NodeId a, NodeId b);
  // G_ij = a_i . a_j; n x n.
  NodeId pairwise_dot(NodeId a);
  // S_im = a_i . negs_{i*M+m}; n x M.
  NodeId grouped_dot(NodeId a, NodeId negs);

  // Per-anchor softmax cross-entropy against the positive logit:
  //   out_i = -ln( exp(pos_i) / (exp(pos_i) + sum_j exp(neg_ij)) )
  // over the concatenated negative blocks, log-sum-exp stabilized.
  // mask_self_block (index into neg_blocks, or -1) marks an n x n block
  // whose diagonal entries are excluded (in-batch negatives).
  NodeId softmax_cross_entropy(NodeId pos_logits,
                               const std::vector<NodeId>& neg_blocks,
                               int mask_self_block = -1);

  NodeId mean_all(NodeId x);

  const Mat& value(NodeId id) const;
  // Gradient of the last backward() target with respect to node `id`.
  // Throws missing-gradient if the node never received one.
  const Mat& grad(NodeId id) const;

  // Reverse sweep from a scalar (1 x 1) node.
  void backward(NodeId loss);

  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Mat value;
    Mat grad;  // empty until touched by backward
    bool requires_grad = false;
    std::function<void(GradientTape&, const Node&)> back;
  };

  Node& at(NodeId id);
  const Node& at(NodeId id) const;
  Mat& grad_buffer(NodeId id);
  bool needs_grad(NodeId id) const { return at(id).requires_grad; }

  NodeId push(Mat value, bool requires_grad,
              std::function<void(GradientTape&, const Node&)> back);

  std::vector<Node> nodes_;
};

}  // namespace anicl
