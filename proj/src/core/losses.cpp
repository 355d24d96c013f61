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

#include "core/losses.hpp"

#include <atomic>
#include <cmath>
#include <iostream>

namespace anicl {

namespace {

void warn_if_not_unit(const Mat& emb, const char* which) {
  static std::atomic<bool> warned{false};
  if (warned.load(std::memory_order_relaxed) || emb.rows() == 0) return;
  const double worst =
      (emb.rowwise().norm().array() - 1.0).abs().maxCoeff();
  if (worst > 1e-6 && !warned.exchange(true)) {
    std::cerr << "[anicl] warning: " << which
              << " embeddings deviate from unit norm by " << worst
              << "; dot-product similarities assume normalized outputs\n";
  }
}

// Diagnostics on raw embedding values (cosine similarities).
void fill_similarity_diagnostics(const Mat& anchors, const Mat& positives,
                                 const Mat& negatives, bool in_batch,
                                 LossNodes& out) {
  const Eigen::Index n = anchors.rows();
  if (n == 0) return;
  out.mean_pos_sim = (anchors.array() * positives.array()).rowwise().sum().mean();
  double neg_sum = 0.0;
  long neg_count = 0;
  if (in_batch && n > 1) {
    const Mat g = anchors * anchors.transpose();
    neg_sum += g.sum() - g.trace();
    neg_count += static_cast<long>(n) * (n - 1);
  }
  if (negatives.rows() > 0) {
    const Eigen::Index m = negatives.rows() / n;
    for (Eigen::Index i = 0; i < n; ++i) {
      neg_sum += (negatives.middleRows(i * m, m) * anchors.row(i).transpose()).sum();
    }
    neg_count += negatives.rows();
  }
  out.mean_neg_sim = neg_count > 0 ? neg_sum / static_cast<double>(neg_count) : 0.0;
}

void check_negative_layout(const GradientTape& tape, NodeId anchors,
                           const NegativeSet& negatives) {
  const Eigen::Index n = tape.value(anchors).rows();
  require_arg(negatives.in_batch || negatives.has_grouped(),
              "loss: no negatives configured");
  if (negatives.in_batch) {
    require_arg(n >= 2, "loss: in-batch negatives need at least 2 anchors");
  }
  if (negatives.has_grouped()) {
    const Mat& g = tape.value(negatives.grouped);
    require_arg(n > 0 && g.rows() % n == 0 && g.rows() > 0,
                "loss: grouped negatives must supply M rows per anchor");
  }
}

}  // namespace

LossNodes infonce_graph(GradientTape& tape, NodeId anchors_emb,
                        NodeId positives_emb, const NegativeSet& negatives,
                        double tau) {
  require_arg(tau > 0.0, "infonce: temperature must be > 0");
  check_negative_layout(tape, anchors_emb, negatives);
  warn_if_not_unit(tape.value(anchors_emb), "anchor");
  warn_if_not_unit(tape.value(positives_emb), "positive");

  const double inv_tau = 1.0 / tau;
  NodeId pos = tape.scale(tape.paired_dot(anchors_emb, positives_emb), inv_tau);
  std::vector<NodeId> blocks;
  int mask_block = -1;
  if (negatives.in_batch) {
    blocks.push_back(tape.scale(tape.pairwise_dot(anchors_emb), inv_tau));
    mask_block = 0;
  }
  if (negatives.has_grouped()) {
    blocks.push_back(
        tape.scale(tape.grouped_dot(anchors_emb, negatives.grouped), inv_tau));
  }
  LossNodes out;
  out.per_anchor = tape.softmax_cross_entropy(pos, blocks, mask_block);
  out.loss = tape.mean_all(out.per_anchor);
  fill_similarity_diagnostics(
      tape.value(anchors_emb), tape.value(positives_emb),
      negatives.has_grouped() ? tape.value(negatives.grouped) : Mat(),
      negatives.in_batch, out);
  return out;
}

LossNodes aninfonce_graph(GradientTape& tape, NodeId anchors_emb,
                          NodeId positives_emb, const NegativeSet& negatives,
                          NodeId lam_node) {
  check_negative_layout(tape, anchors_emb, negatives);
  require_arg(tape.value(lam_node).cols() == 1 &&
                  tape.value(lam_node).rows() == tape.value(anchors_emb).cols(),
              "aninfonce: scaling dimension mismatch");

  NodeId pos = tape.scale(
      tape.paired_sqdist(anchors_emb, positives_emb, lam_node), -1.0);
  std::vector<NodeId> blocks;
  int mask_block = -1;
  if (negatives.in_batch) {
    blocks.push_back(
        tape.scale(tape.pairwise_sqdist(anchors_emb, lam_node), -1.0));
    mask_block = 0;
  }
  if (negatives.has_grouped()) {
    blocks.push_back(tape.scale(
        tape.grouped_sqdist(anchors_emb, negatives.grouped, lam_node), -1.0));
  }
  LossNodes out;
  out.per_anchor = tape.softmax_cross_entropy(pos, blocks, mask_block);
  out.loss = tape.mean_all(out.per_anchor);
  fill_similarity_diagnostics(
      tape.value(anchors_emb), tape.value(positives_emb),
      negatives.has_grouped() ? tape.value(negatives.grouped) : Mat(),
      negatives.in_batch, out);
  return out;
}

namespace {

LossValue eval_value_loss(bool aninfonce, const Mat& anchors, const Mat& positives,
                          const Mat& negatives, double tau,
                          const ConcentrationMatrix* lam) {
  require_arg(anchors.rows() == positives.rows() &&
                  anchors.cols() == positives.cols(),
              "loss: anchor/positive shape mismatch");
  GradientTape tape;
  NodeId a = tape.leaf(anchors);
  NodeId p = tape.leaf(positives);
  NegativeSet negs;
  if (negatives.rows() > 0) {
    negs.in_batch = false;
    negs.grouped = tape.leaf(negatives);
  }
  LossNodes nodes;
  if (aninfonce) {
    require_arg(lam->dim() == anchors.cols(),
                "aninfonce: scaling dimension mismatch");
    NodeId lam_node = tape.leaf(lam->diag);
    nodes = aninfonce_graph(tape, a, p, negs, lam_node);
  } else {
    nodes = infonce_graph(tape, a, p, negs, tau);
  }
  LossValue out;
  out.value = tape.value(nodes.loss)(0, 0);
  out.per_anchor = tape.value(nodes.per_anchor).col(0);
  out.mean_pos_sim = nodes.mean_pos_sim;
  out.mean_neg_sim = nodes.mean_neg_sim;
  return out;
}

}  // namespace

LossValue infonce_loss(const Mat& anchors_emb, const Mat& positives_emb,
                       const Mat& negatives_emb, double tau) {
  return eval_value_loss(false, anchors_emb, positives_emb, negatives_emb, tau,
                         nullptr);
}

LossValue aninfonce_loss(const Mat& anchors_emb, const Mat& positives_emb,
                         const Mat& negatives_emb,
                         const ConcentrationMatrix& lam_hat) {
  return eval_value_loss(true, anchors_emb, positives_emb, negatives_emb, 0.0,
                         &lam_hat);
}

LossValue ensemble_loss(const std::vector<Mat>& anchors_emb,
                        const std::vector<Mat>& positives_emb,
                        const std::vector<Mat>& negatives_emb,
                        const std::vector<ConcentrationMatrix>& lam_hats) {
  require_arg(!anchors_emb.empty(), "ensemble: needs at least one batch");
  require_arg(anchors_emb.size() == positives_emb.size() &&
                  anchors_emb.size() == negatives_emb.size() &&
                  anchors_emb.size() == lam_hats.size(),
              "ensemble: batch/scaling count mismatch");
  LossValue total;
  for (std::size_t i = 0; i < anchors_emb.size(); ++i) {
    LossValue li = aninfonce_loss(anchors_emb[i], positives_emb[i],
                                  negatives_emb[i], lam_hats[i]);
    total.value += li.value;
    if (total.per_anchor.size() == 0) {
      total.per_anchor = li.per_anchor;
    } else {
      total.per_anchor += li.per_anchor;
    }
    total.mean_pos_sim += li.mean_pos_sim / static_cast<double>(anchors_emb.size());
    total.mean_neg_sim += li.mean_neg_sim / static_cast<double>(anchors_emb.size());
  }
  return total;
}

OracleEstimate bayes_optimal_loss(const ConcentrationMatrix& lam_pos,
                                  const std::optional<ConcentrationMatrix>& lam_neg,
                                  int m_negatives, int d, long n_mc,
                                  RngStream rng, bool allow_degenerate,
                                  const McmcOptions& mcmc) {
  require_arg(d >= 1, "oracle: d must be >= 1");
  require_arg(m_negatives >= 1, "oracle: M must be >= 1");
  require_arg(n_mc >= 2, "oracle: n_mc must be >= 2");
  require_arg(lam_pos.dim() == d, "oracle: lam_pos dimension mismatch");
  Vec lam_eff = lam_pos.diag;
  if (lam_neg.has_value()) {
    require_arg(lam_neg->dim() == d, "oracle: lam_neg dimension mismatch");
    lam_eff -= lam_neg->diag;
  }
  if (allow_degenerate) {
    require_arg((lam_eff.array() >= 0.0).all(),
                "oracle: effective concentration must be >= 0");
  } else {
    require_arg((lam_eff.array() > 0.0).all(),
                "oracle: effective concentration must be positive definite");
  }

  // Exact per-draw conditional sampling. Isotropic targets are vMF draws.
  // Anisotropic targets prefer rejection with a vMF(anchor, 2*min(lam))
  // envelope, which is exact: the density ratio to the envelope is
  // exp(-sum_i (lam_i - lam_min) (z_i - anchor_i)^2) <= 1. When a pilot run
  // shows the envelope acceptance is impractically low, fall back to the
  // burn-in MH chain.
  enum class Sampler { kVmf, kEnvelope, kMh };
  auto pick_sampler = [&](const ConcentrationMatrix& lam) -> Sampler {
    if ((lam.diag.array() == lam.diag(0)).all()) return Sampler::kVmf;
    RngStream pilot = rng.substream(0x70696c6fULL ^ lam.diag.size());
    const double kappa = 2.0 * lam.min_entry();
    const Vec slack = lam.diag.array() - lam.min_entry();
    int accepted = 0;
    const int kPilot = 2000;
    for (int t = 0; t < kPilot; ++t) {
      const Vec anchor = sample_uniform_sphere(d, 1, pilot.substream(t)).row(0);
      RngStream s = pilot.substream(kPilot + t);
      const Vec prop = sample_vmf_one(anchor, kappa, s);
      const double logr = -(prop - anchor).array().square().matrix().dot(slack);
      if (std::log(s.uniform(0x1.0p-53, 1.0)) < logr) ++accepted;
    }
    return accepted >= 10 ? Sampler::kEnvelope : Sampler::kMh;
  };
  const Sampler pos_sampler = pick_sampler(lam_pos);
  const Sampler neg_sampler =
      lam_neg.has_value() ? pick_sampler(*lam_neg) : Sampler::kVmf;

  auto draw_conditional = [&](const Vec& anchor, const ConcentrationMatrix& lam,
                              Sampler sampler, RngStream& s) -> Vec {
    switch (sampler) {
      case Sampler::kVmf:
        return sample_vmf_one(anchor, 2.0 * lam.diag(0), s);
      case Sampler::kEnvelope: {
        const double kappa = 2.0 * lam.min_entry();
        const Vec slack = lam.diag.array() - lam.min_entry();
        for (;;) {
          Vec prop = sample_vmf_one(anchor, kappa, s);
          const double logr =
              -(prop - anchor).array().square().matrix().dot(slack);
          if (std::log(s.uniform(0x1.0p-53, 1.0)) < logr) return prop;
        }
      }
      case Sampler::kMh:
        return sample_conditional_one(anchor, lam, ConditionalMethod::kExactMh,
                                      s, mcmc);
    }
    throw_error(ErrorCode::kInternal, "oracle: unreachable sampler");
  };

  double sum = 0.0;
  double sumsq = 0.0;
  Mat negs(m_negatives, d);
  Vec qneg(m_negatives);
  Vec neg_sq(m_negatives);
  for (long t = 0; t < n_mc; ++t) {
    RngStream s = rng.substream(static_cast<std::uint64_t>(t));
    RngStream as = s.substream(0);
    Vec anchor(d);
    do {
      for (int k = 0; k < d; ++k) anchor(k) = as.normal();
    } while (anchor.norm() == 0.0);
    anchor /= anchor.norm();

    RngStream ps = s.substream(1);
    const Vec pos = draw_conditional(anchor, lam_pos, pos_sampler, ps);
    const double pos_logit =
        -(pos - anchor).array().square().matrix().dot(lam_eff);

    RngStream ns = s.substream(2);
    if (lam_neg.has_value()) {
      for (int j = 0; j < m_negatives; ++j) {
        negs.row(j) =
            draw_conditional(anchor, *lam_neg, neg_sampler, ns).transpose();
      }
    } else {
      for (int j = 0; j < m_negatives; ++j) {
        double norm2 = 0.0;
        do {
          norm2 = 0.0;
          for (int k = 0; k < d; ++k) {
            const double v = ns.normal();
            negs(j, k) = v;
            norm2 += v * v;
          }
        } while (norm2 == 0.0);
        negs.row(j) /= std::sqrt(norm2);
      }
    }
    // q_j = s_lam(neg_j) + s_lam(anchor) - 2 neg_j . (lam_eff * anchor).
    const Vec lam_anchor = lam_eff.cwiseProduct(anchor);
    const double anchor_sq = lam_anchor.dot(anchor);
    neg_sq.noalias() = negs.array().square().matrix() * lam_eff;
    qneg.noalias() = negs * lam_anchor;
    qneg = neg_sq + Vec::Constant(m_negatives, anchor_sq) - 2.0 * qneg;

    double mx = pos_logit;
    mx = std::max(mx, (-qneg).maxCoeff());
    const double denom =
        std::exp(pos_logit - mx) + ((-qneg).array() - mx).exp().sum();
    const double draw = (mx + std::log(denom)) - pos_logit;
    sum += draw;
    sumsq += draw * draw;
  }
  OracleEstimate est;
  est.n_draws = n_mc;
  est.value = sum / static_cast<double>(n_mc);
  const double var =
      (sumsq - sum * sum / static_cast<double>(n_mc)) / static_cast<double>(n_mc - 1);
  est.std_error = std::sqrt(std::max(0.0, var) / static_cast<double>(n_mc));
  return est;
}

}  // namespace anicl
