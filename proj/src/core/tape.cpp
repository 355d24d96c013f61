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

#include "core/tape.hpp"

#include <cmath>
#include <limits>
#include <memory>

namespace anicl {

GradientTape::Node& GradientTape::at(NodeId id) {
  require_arg(id >= 0 && id < size(), "tape: node id out of range");
  return nodes_[static_cast<std::size_t>(id)];
}

const GradientTape::Node& GradientTape::at(NodeId id) const {
  require_arg(id >= 0 && id < size(), "tape: node id out of range");
  return nodes_[static_cast<std::size_t>(id)];
}

Mat& GradientTape::grad_buffer(NodeId id) {
  Node& n = at(id);
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

NodeId GradientTape::push(Mat value, bool requires_grad,
                          std::function<void(GradientTape&, const Node&)> back) {
  nodes_.push_back(Node{std::move(value), Mat(), requires_grad, std::move(back)});
  return size() - 1;
}

NodeId GradientTape::leaf(Mat value, bool requires_grad) {
  return push(std::move(value), requires_grad, nullptr);
}

NodeId GradientTape::affine(NodeId x, NodeId w, NodeId b) {
  const Mat& xv = value(x);
  const Mat& wv = value(w);
  const Mat& bv = value(b);
  require_arg(xv.cols() == wv.cols(), "affine: input dim mismatch");
  require_arg(bv.cols() == 1 && bv.rows() == wv.rows(),
              "affine: bias must be (out x 1)");
  Mat y = xv * wv.transpose();
  y.rowwise() += bv.col(0).transpose();
  const bool req = needs_grad(x) || needs_grad(w) || needs_grad(b);
  return push(std::move(y), req, [x, w, b](GradientTape& t, const Node& n) {
    const Mat& g = n.grad;
    if (t.needs_grad(x)) t.grad_buffer(x).noalias() += g * t.value(w);
    if (t.needs_grad(w)) t.grad_buffer(w).noalias() += g.transpose() * t.value(x);
    if (t.needs_grad(b)) t.grad_buffer(b).col(0) += g.colwise().sum().transpose();
  });
}

NodeId GradientTape::leaky_relu(NodeId x, double slope) {
  const Mat& xv = value(x);
  Mat y = xv.array().max(xv.array() * slope).matrix();
  return push(std::move(y), needs_grad(x), [x, slope](GradientTape& t, const Node& n) {
    if (!t.needs_grad(x)) return;
    const Mat& xv = t.value(x);
    t.grad_buffer(x).array() +=
        n.grad.array() *
        ((xv.array() >= 0.0).cast<double>() * (1.0 - slope) + slope);
  });
}

NodeId GradientTape::row_normalize(NodeId x) {
  const Mat& xv = value(x);
  Vec inv_norm(xv.rows());
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    const double nn = xv.row(i).norm();
    require(nn > 0.0 && std::isfinite(nn), ErrorCode::kNumericOverflow,
            "row_normalize: zero or non-finite row norm");
    inv_norm(i) = 1.0 / nn;
  }
  Mat y = inv_norm.asDiagonal() * xv;
  return push(std::move(y), needs_grad(x),
              [x, inv_norm](GradientTape& t, const Node& n) {
                if (!t.needs_grad(x)) return;
                const Mat& y = n.value;
                const Mat& g = n.grad;
                // Jacobian (I - y y^T) / ||x|| per row.
                Vec dots = (g.array() * y.array()).rowwise().sum();
                Mat dx = g - dots.asDiagonal() * y;
                t.grad_buffer(x) += inv_norm.asDiagonal() * dx;
              });
}

NodeId GradientTape::exp_elem(NodeId x) {
  Mat y = value(x).array().exp().matrix();
  return push(std::move(y), needs_grad(x), [x](GradientTape& t, const Node& n) {
    if (!t.needs_grad(x)) return;
    t.grad_buffer(x).array() += n.grad.array() * n.value.array();
  });
}

NodeId GradientTape::scale(NodeId x, double c) {
  Mat y = c * value(x);
  return push(std::move(y), needs_grad(x), [x, c](GradientTape& t, const Node& n) {
    if (!t.needs_grad(x)) return;
    t.grad_buffer(x) += c * n.grad;
  });
}

NodeId GradientTape::add(NodeId x, NodeId y) {
  require_arg(value(x).rows() == value(y).rows() &&
                  value(x).cols() == value(y).cols(),
              "add: shape mismatch");
  Mat v = value(x) + value(y);
  const bool req = needs_grad(x) || needs_grad(y);
  return push(std::move(v), req, [x, y](GradientTape& t, const Node& n) {
    if (t.needs_grad(x)) t.grad_buffer(x) += n.grad;
    if (t.needs_grad(y)) t.grad_buffer(y) += n.grad;
  });
}

NodeId GradientTape::paired_sqdist(NodeId a, NodeId b, NodeId w) {
  const Mat& av = value(a);
  const Mat& bv = value(b);
  const Mat& wv = value(w);
  require_arg(av.rows() == bv.rows() && av.cols() == bv.cols(),
              "paired_sqdist: shape mismatch");
  require_arg(wv.cols() == 1 && wv.rows() == av.cols(),
              "paired_sqdist: weight must be (d x 1)");
  Mat diff = bv - av;
  Mat q = (diff.array().square().matrix() * wv.col(0)).eval();
  const bool req = needs_grad(a) || needs_grad(b) || needs_grad(w);
  return push(std::move(q), req, [a, b, w](GradientTape& t, const Node& n) {
    const Mat diff = t.value(b) - t.value(a);
    const Vec& wv = t.value(w).col(0);
    const Vec& g = n.grad.col(0);
    if (t.needs_grad(a) || t.needs_grad(b)) {
      // d q_i / d b_ik = 2 w_k diff_ik, d/d a_ik the negation.
      Mat db = 2.0 * (g.asDiagonal() * diff) * wv.asDiagonal();
      if (t.needs_grad(b)) t.grad_buffer(b) += db;
      if (t.needs_grad(a)) t.grad_buffer(a) -= db;
    }
    if (t.needs_grad(w)) {
      t.grad_buffer(w).col(0).noalias() +=
          diff.array().square().matrix().transpose() * g;
    }
  });
}

NodeId GradientTape::pairwise_sqdist(NodeId a, NodeId w) {
  const Mat& av = value(a);
  const Mat& wv = value(w);
  require_arg(wv.cols() == 1 && wv.rows() == av.cols(),
              "pairwise_sqdist: weight must be (d x 1)");
  // Q_ij = s_i + s_j - 2 G_ij with G = A diag(w) A^T and s = diag(G).
  Mat aw = av * wv.col(0).asDiagonal();
  Mat q(av.rows(), av.rows());
  q.noalias() = aw * av.transpose();
  Vec s = q.diagonal();
  q *= -2.0;
  q.colwise() += s;
  q.rowwise() += s.transpose();
  const bool req = needs_grad(a) || needs_grad(w);
  return push(std::move(q), req, [a, w](GradientTape& t, const Node& n) {
    const Mat& av = t.value(a);
    const Vec& wv = t.value(w).col(0);
    const Mat& g = n.grad;
    if (t.needs_grad(a)) {
      // dA = 2 (diag(r) A - B A) diag(w), B = g + g^T, r = B 1.
      Mat bsym = g + g.transpose();
      Vec r = bsym.rowwise().sum();
      Mat da = r.asDiagonal() * av;
      da.noalias() -= bsym * av;
      t.grad_buffer(a).noalias() += 2.0 * (da * wv.asDiagonal());
    }
    if (t.needs_grad(w)) {
      Vec rows = g.rowwise().sum();
      Vec cols = g.colwise().sum().transpose();
      Mat sq = av.array().square().matrix();
      Vec dw = sq.transpose() * (rows + cols);
      dw.noalias() -= 2.0 * ((g * av).array() * av.array()).colwise().sum().matrix().transpose();
      t.grad_buffer(w).col(0) += dw;
    }
  });
}

NodeId GradientTape::grouped_sqdist(NodeId a, NodeId negs, NodeId w) {
  const Mat& av = value(a);
  const Mat& nv = value(negs);
  const Mat& wv = value(w);
  const Eigen::Index n = av.rows();
  require_arg(n > 0 && nv.rows() % n == 0,
              "grouped_sqdist: negative rows must be n * M");
  require_arg(nv.cols() == av.cols(), "grouped_sqdist: dim mismatch");
  require_arg(wv.cols() == 1 && wv.rows() == av.cols(),
              "grouped_sqdist: weight must be (d x 1)");
  const Eigen::Index m = nv.rows() / n;
  Mat q(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    auto block = nv.middleRows(i * m, m);
    q.row(i) = ((block.rowwise() - av.row(i)).array().square().matrix() *
                wv.col(0))
                   .transpose();
  }
  const bool req = needs_grad(a) || needs_grad(negs) || needs_grad(w);
  return push(std::move(q), req, [a, negs, w, n, m](GradientTape& t, const Node& nd) {
    const Mat& av = t.value(a);
    const Mat& nv = t.value(negs);
    const Vec& wv = t.value(w).col(0);
    const Mat& g = nd.grad;
    const bool ga = t.needs_grad(a);
    const bool gn = t.needs_grad(negs);
    const bool gw = t.needs_grad(w);
    Mat* da = ga ? &t.grad_buffer(a) : nullptr;
    Mat* dn = gn ? &t.grad_buffer(negs) : nullptr;
    Vec dw = Vec::Zero(wv.size());
    for (Eigen::Index i = 0; i < n; ++i) {
      const Mat diff = nv.middleRows(i * m, m).rowwise() - av.row(i);
      if (ga || gn) {
        Mat dblock =
            2.0 * (g.row(i).transpose().asDiagonal() * diff) * wv.asDiagonal();
        if (gn) dn->middleRows(i * m, m) += dblock;
        if (ga) da->row(i) -= dblock.colwise().sum();
      }
      if (gw) {
        dw.noalias() +=
            diff.array().square().matrix().transpose() * g.row(i).transpose();
      }
    }
    if (gw) t.grad_buffer(w).col(0) += dw;
  });
}

NodeId GradientTape::paired_dot(NodeId a, NodeId b) {
  const Mat& av = value(a);
  const Mat& bv = value(b);
  require_arg(av.rows() == bv.rows() && av.cols() == bv.cols(),
              "paired_dot: shape mismatch");
  Mat s = (av.array() * bv.array()).rowwise().sum();
  const bool req = needs_grad(a) || needs_grad(b);
  return push(std::move(s), req, [a, b](GradientTape& t, const Node& n) {
    const Vec& g = n.grad.col(0);
    if (t.needs_grad(a)) t.grad_buffer(a) += g.asDiagonal() * t.value(b);
    if (t.needs_grad(b)) t.grad_buffer(b) += g.asDiagonal() * t.value(a);
  });
}

NodeId GradientTape::pairwise_dot(NodeId a) {
  const Mat& av = value(a);
  Mat gmat(av.rows(), av.rows());
  gmat.noalias() = av * av.transpose();
  return push(std::move(gmat), needs_grad(a), [a](GradientTape& t, const Node& n) {
    if (!t.needs_grad(a)) return;
    t.grad_buffer(a).noalias() += (n.grad + n.grad.transpose()) * t.value(a);
  });
}

NodeId GradientTape::grouped_dot(NodeId a, NodeId negs) {
  const Mat& av = value(a);
  const Mat& nv = value(negs);
  const Eigen::Index n = av.rows();
  require_arg(n > 0 && nv.rows() % n == 0,
              "grouped_dot: negative rows must be n * M");
  require_arg(nv.cols() == av.cols(), "grouped_dot: dim mismatch");
  const Eigen::Index m = nv.rows() / n;
  Mat s(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    s.row(i) = (nv.middleRows(i * m, m) * av.row(i).transpose()).transpose();
  }
  const bool req = needs_grad(a) || needs_grad(negs);
  return push(std::move(s), req, [a, negs, n, m](GradientTape& t, const Node& nd) {
    const Mat& av = t.value(a);
    const Mat& nv = t.value(negs);
    const Mat& g = nd.grad;
    const bool ga = t.needs_grad(a);
    const bool gn = t.needs_grad(negs);
    Mat* da = ga ? &t.grad_buffer(a) : nullptr;
    Mat* dn = gn ? &t.grad_buffer(negs) : nullptr;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (ga) da->row(i) += g.row(i) * nv.middleRows(i * m, m);
      if (gn) {
        dn->middleRows(i * m, m).noalias() += g.row(i).transpose() * av.row(i);
      }
    }
  });
}

NodeId GradientTape::softmax_cross_entropy(NodeId pos_logits,
                                           const std::vector<NodeId>& neg_blocks,
                                           int mask_self_block) {
  const Mat& pos = value(pos_logits);
  const Eigen::Index n = pos.rows();
  require_arg(pos.cols() == 1, "softmax_ce: positive logits must be (n x 1)");
  require_arg(!neg_blocks.empty(), "softmax_ce: needs at least one negative block");
  require_arg(mask_self_block < static_cast<int>(neg_blocks.size()),
              "softmax_ce: mask block index out of range");
  for (std::size_t b = 0; b < neg_blocks.size(); ++b) {
    const Mat& blk = value(neg_blocks[b]);
    require_arg(blk.rows() == n, "softmax_ce: negative block row mismatch");
    if (static_cast<int>(b) == mask_self_block) {
      require_arg(blk.cols() == n, "softmax_ce: self-mask block must be n x n");
    }
  }

  // Row-wise stabilized softmax over [pos | blocks...]. Masked entries are
  // set to -inf, which exp() turns into exact zeros. Probabilities are
  // cached for the backward pass.
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  Mat masked_copy;
  Vec row_max = pos.col(0);
  for (std::size_t b = 0; b < neg_blocks.size(); ++b) {
    const Mat* blk = &value(neg_blocks[b]);
    if (static_cast<int>(b) == mask_self_block) {
      masked_copy = *blk;
      masked_copy.diagonal().setConstant(kNegInf);
      blk = &masked_copy;
    }
    row_max = row_max.cwiseMax(blk->rowwise().maxCoeff());
  }

  auto pos_prob = std::make_shared<Vec>((pos.col(0) - row_max).array().exp());
  Vec denom = *pos_prob;
  auto blk_probs = std::make_shared<std::vector<Mat>>();
  for (std::size_t b = 0; b < neg_blocks.size(); ++b) {
    const Mat& src = static_cast<int>(b) == mask_self_block ? masked_copy
                                                            : value(neg_blocks[b]);
    Mat p = (src.colwise() - row_max).array().exp();
    denom += p.rowwise().sum();
    blk_probs->push_back(std::move(p));
  }
  Vec inv_denom = denom.cwiseInverse();
  Mat loss = (denom.array().log() - (pos.col(0) - row_max).array()).matrix();
  *pos_prob = pos_prob->cwiseProduct(inv_denom);
  for (auto& p : *blk_probs) p = inv_denom.asDiagonal() * p;

  bool req = needs_grad(pos_logits);
  for (NodeId b : neg_blocks) req = req || needs_grad(b);
  return push(std::move(loss), req,
              [pos_logits, neg_blocks, pos_prob, blk_probs](GradientTape& t,
                                                            const Node& nd) {
                const Vec& g = nd.grad.col(0);
                if (t.needs_grad(pos_logits)) {
                  t.grad_buffer(pos_logits).col(0).array() +=
                      g.array() * (pos_prob->array() - 1.0);
                }
                for (std::size_t b = 0; b < neg_blocks.size(); ++b) {
                  if (!t.needs_grad(neg_blocks[b])) continue;
                  t.grad_buffer(neg_blocks[b]) +=
                      g.asDiagonal() * (*blk_probs)[b];
                }
              });
}

NodeId GradientTape::mean_all(NodeId x) {
  const Mat& xv = value(x);
  require_arg(xv.size() > 0, "mean_all: empty node");
  Mat v(1, 1);
  v(0, 0) = xv.mean();
  const double inv = 1.0 / static_cast<double>(xv.size());
  return push(std::move(v), needs_grad(x), [x, inv](GradientTape& t, const Node& n) {
    if (!t.needs_grad(x)) return;
    t.grad_buffer(x).array() += n.grad(0, 0) * inv;
  });
}

const Mat& GradientTape::value(NodeId id) const { return at(id).value; }

const Mat& GradientTape::grad(NodeId id) const {
  const Node& n = at(id);
  require(n.grad.size() != 0, ErrorCode::kMissingGradient,
          "tape: node did not receive a gradient (detached from the loss?)");
  return n.grad;
}

void GradientTape::backward(NodeId loss) {
  Node& top = at(loss);
  require_arg(top.value.rows() == 1 && top.value.cols() == 1,
              "backward: target must be scalar");
  require(std::isfinite(top.value(0, 0)), ErrorCode::kNumericOverflow,
          "backward: non-finite loss");
  grad_buffer(loss)(0, 0) = 1.0;
  for (NodeId id = loss; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.grad.size() == 0 || !n.back) continue;
    n.back(*this, n);
  }
}

}  // namespace anicl
