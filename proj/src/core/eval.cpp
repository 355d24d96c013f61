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

#include "core/eval.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "json.hpp"

namespace anicl {

LinearFit fit_linear_map(const Mat& predicted, const Mat& target,
                         bool with_intercept) {
  require_arg(predicted.rows() == target.rows(), "linear fit: row mismatch");
  const Eigen::Index n = predicted.rows();
  const Eigen::Index dp = predicted.cols();
  const Eigen::Index dt = target.cols();
  require_arg(n >= 10 * std::max(dp, dt),
              "linear fit: need at least 10*d samples");

  const Eigen::Index n_fit = (n * 8) / 10;
  const Eigen::Index n_eval = n - n_fit;

  Mat x_fit(n_fit, dp + (with_intercept ? 1 : 0));
  x_fit.leftCols(dp) = predicted.topRows(n_fit);
  if (with_intercept) x_fit.col(dp).setOnes();
  const Mat y_fit = target.topRows(n_fit);

  // Least squares per target dimension via a rank-revealing QR; falls back
  // to the pseudo-inverse (with a warning) when the design is deficient.
  Eigen::ColPivHouseholderQR<Mat> qr(x_fit);
  Mat coef;
  if (qr.rank() < x_fit.cols()) {
    std::cerr << "[anicl] warning: rank-deficient design matrix in linear "
                 "fit; using pseudo-inverse\n";
    Eigen::JacobiSVD<Mat> svd(x_fit, Eigen::ComputeThinU | Eigen::ComputeThinV);
    coef = svd.solve(y_fit);
  } else {
    coef = qr.solve(y_fit);
  }

  LinearFit fit;
  fit.map = coef.topRows(dp).transpose();
  fit.intercept = with_intercept ? Vec(coef.row(dp).transpose()) : Vec(Vec::Zero(dt));
  fit.eval_samples = static_cast<int>(n_eval);

  Mat pred_eval = predicted.bottomRows(n_eval) * coef.topRows(dp);
  if (with_intercept) pred_eval.rowwise() += coef.row(dp);
  const Mat y_eval = target.bottomRows(n_eval);
  const Vec y_mean = y_eval.colwise().mean();

  fit.per_dim_r2.resize(dt);
  for (Eigen::Index j = 0; j < dt; ++j) {
    const double ssr = (y_eval.col(j) - pred_eval.col(j)).squaredNorm();
    const double sst = (y_eval.col(j).array() - y_mean(j)).square().sum();
    fit.per_dim_r2(j) = sst > 0.0 ? 1.0 - ssr / sst
                                  : (ssr == 0.0 ? 1.0 : 0.0);
  }
  fit.mean_r2 = fit.per_dim_r2.mean();
  return fit;
}

double mean_over(const Vec& values, const std::vector<int>& idx) {
  require_arg(!idx.empty(), "mean_over: empty index set");
  double s = 0.0;
  for (int i : idx) {
    require_arg(i >= 0 && i < values.size(), "mean_over: index out of range");
    s += values(i);
  }
  return s / static_cast<double>(idx.size());
}

LambdaComparison compare_lambda(const ConcentrationMatrix& learned,
                                const ConcentrationMatrix& truth) {
  require_arg(learned.dim() == truth.dim(), "compare_lambda: dim mismatch");
  const int d = learned.dim();
  LambdaComparison cmp;
  cmp.matched_learned = learned.diag;
  cmp.matched_truth = truth.diag;
  std::sort(cmp.matched_learned.data(), cmp.matched_learned.data() + d);
  std::sort(cmp.matched_truth.data(), cmp.matched_truth.data() + d);
  cmp.rel_errors =
      ((cmp.matched_learned - cmp.matched_truth).array() / cmp.matched_truth.array())
          .abs();
  cmp.max_rel_error = cmp.rel_errors.maxCoeff();
  cmp.mean_rel_error = cmp.rel_errors.mean();
  const double denom = cmp.matched_learned.squaredNorm();
  cmp.scale = denom > 0.0 ? cmp.matched_learned.dot(cmp.matched_truth) / denom : 1.0;
  cmp.scaled_rel_errors = ((cmp.scale * cmp.matched_learned - cmp.matched_truth)
                               .array() /
                           cmp.matched_truth.array())
                              .abs();
  cmp.max_scaled_rel_error = cmp.scaled_rel_errors.maxCoeff();
  return cmp;
}

namespace {

// Groups dimensions whose lambda agrees within 1% relative.
std::vector<std::vector<int>> lambda_blocks(const Vec& lam) {
  const int d = static_cast<int>(lam.size());
  std::vector<int> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return lam(a) < lam(b); });
  std::vector<std::vector<int>> blocks;
  for (int idx : order) {
    if (!blocks.empty()) {
      const double ref = lam(blocks.back().front());
      if (std::abs(lam(idx) - ref) <= 0.01 * std::abs(ref)) {
        blocks.back().push_back(idx);
        continue;
      }
    }
    blocks.push_back({idx});
  }
  return blocks;
}

// Hungarian assignment on a small square cost matrix (minimization).
std::vector<int> solve_assignment(const Mat& cost) {
  const int n = static_cast<int>(cost.rows());
  // O(n^3) shortest augmenting path formulation; n <= a few dozen here.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, std::numeric_limits<double>::infinity());
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = std::numeric_limits<double>::infinity();
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j) {
    if (p[j] > 0) row_to_col[p[j] - 1] = j - 1;
  }
  return row_to_col;
}

}  // namespace

BlockOrthogonalFit orthogonality_residual(const Mat& z, const Mat& h,
                                          const ConcentrationMatrix& lam) {
  const Eigen::Index n = z.rows();
  const Eigen::Index d = z.cols();
  require_arg(h.rows() == n && h.cols() == d,
              "orthogonality_residual: shape mismatch");
  require_arg(lam.dim() == d, "orthogonality_residual: lambda dim mismatch");
  require(n >= d, ErrorCode::kInsufficientData,
          "orthogonality_residual: need at least d samples");

  BlockOrthogonalFit fit;
  fit.blocks = lambda_blocks(lam.diag);

  // Unconstrained least-squares map W (h ~ z W^T) guides the assignment of
  // output dimensions to input blocks: output dim j goes with the block
  // holding most of row j's energy. An exact balanced assignment handles
  // ties and near-collapse cases.
  const Mat w_free = (z.colPivHouseholderQr().solve(h)).transpose();  // d x d
  Mat cost(d, d);  // output dim -> (block slot) cost
  std::vector<int> slot_block;
  for (std::size_t b = 0; b < fit.blocks.size(); ++b) {
    for (std::size_t s = 0; s < fit.blocks[b].size(); ++s) {
      slot_block.push_back(static_cast<int>(b));
    }
  }
  for (Eigen::Index j = 0; j < d; ++j) {
    const double total = w_free.row(j).squaredNorm();
    for (Eigen::Index s = 0; s < d; ++s) {
      double energy = 0.0;
      for (int i : fit.blocks[static_cast<std::size_t>(slot_block[s])]) {
        energy += w_free(j, i) * w_free(j, i);
      }
      cost(j, s) = total - energy;
    }
  }
  const std::vector<int> out_slot = solve_assignment(cost);

  std::vector<std::vector<int>> out_dims(fit.blocks.size());
  for (Eigen::Index j = 0; j < d; ++j) {
    out_dims[static_cast<std::size_t>(slot_block[out_slot[j]])].push_back(
        static_cast<int>(j));
  }

  // Per block: orthogonal Procrustes from the input block of z to the
  // assigned output dims of h.
  fit.transform = Mat::Zero(d, d);
  double sq_err = 0.0;
  for (std::size_t b = 0; b < fit.blocks.size(); ++b) {
    const auto& in_idx = fit.blocks[b];
    const auto& out_idx = out_dims[b];
    const int k = static_cast<int>(in_idx.size());
    Mat zb(n, k), hb(n, k);
    for (int c = 0; c < k; ++c) {
      zb.col(c) = z.col(in_idx[static_cast<std::size_t>(c)]);
      hb.col(c) = h.col(out_idx[static_cast<std::size_t>(c)]);
    }
    Mat cross = hb.transpose() * zb;
    Eigen::JacobiSVD<Mat> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat rot = svd.matrixU() * svd.matrixV().transpose();
    sq_err += (hb - zb * rot.transpose()).squaredNorm();
    for (int r = 0; r < k; ++r) {
      for (int c = 0; c < k; ++c) {
        fit.transform(out_idx[static_cast<std::size_t>(r)],
                      in_idx[static_cast<std::size_t>(c)]) = rot(r, c);
      }
    }
  }
  fit.residual = sq_err / static_cast<double>(n);
  return fit;
}

OverlapHistogram overlap_histogram(const Mat& anchors, const Mat& positives,
                                   const Mat& negatives) {
  const Eigen::Index n = anchors.rows();
  require_arg(positives.rows() == n, "overlap_histogram: shape mismatch");
  require_arg(n >= 2 || negatives.rows() > 0,
              "overlap_histogram: need negatives or at least 2 anchors");
  OverlapHistogram hist;
  constexpr int kBins = 100;
  hist.positive_bins.assign(kBins, 0);
  hist.negative_bins.assign(kBins, 0);
  auto bin_of = [](double sim) {
    const int b = static_cast<int>((sim + 1.0) * 0.5 * kBins);
    return std::clamp(b, 0, kBins - 1);
  };
  hist.min_positive_sim = 2.0;
  hist.max_negative_sim = -2.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = anchors.row(i).dot(positives.row(i));
    hist.min_positive_sim = std::min(hist.min_positive_sim, s);
    ++hist.positive_bins[static_cast<std::size_t>(bin_of(s))];
  }
  if (negatives.rows() > 0) {
    const Eigen::Index m = negatives.rows() / n;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vec sims = negatives.middleRows(i * m, m) * anchors.row(i).transpose();
      for (Eigen::Index j = 0; j < sims.size(); ++j) {
        hist.max_negative_sim = std::max(hist.max_negative_sim, sims(j));
        ++hist.negative_bins[static_cast<std::size_t>(bin_of(sims(j)))];
      }
    }
  } else {
    const Mat g = anchors * anchors.transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j) continue;
        hist.max_negative_sim = std::max(hist.max_negative_sim, g(i, j));
        ++hist.negative_bins[static_cast<std::size_t>(bin_of(g(i, j)))];
      }
    }
  }
  hist.disjoint = hist.min_positive_sim > hist.max_negative_sim;
  return hist;
}

double domain_classifier_accuracy(const Mat& set_a, const Mat& set_b,
                                  RngStream rng) {
  require_arg(set_a.rows() > 10 && set_b.rows() > 10,
              "domain classifier: need more than 10 samples per class");
  require_arg(set_a.cols() == set_b.cols(), "domain classifier: dim mismatch");
  const Eigen::Index d = set_a.cols();

  auto split = [](const Mat& m) {
    const Eigen::Index n_fit = (m.rows() * 8) / 10;
    return std::pair<Mat, Mat>(m.topRows(n_fit), m.bottomRows(m.rows() - n_fit));
  };
  auto [a_fit, a_eval] = split(set_a);
  auto [b_fit, b_eval] = split(set_b);

  // Full-batch gradient training of w, b on the logistic loss.
  Vec w = Vec::Zero(d);
  double bias = 0.0;
  (void)rng;  // deterministic zero init; kept for interface stability
  const double lr = 0.5;
  const Eigen::Index na = a_fit.rows(), nb = b_fit.rows();
  const double inv_n = 1.0 / static_cast<double>(na + nb);
  for (int epoch = 0; epoch < 500; ++epoch) {
    // labels: a -> 1, b -> 0
    Vec za = a_fit * w;
    za.array() += bias;
    Vec zb = b_fit * w;
    zb.array() += bias;
    const Vec pa = 1.0 / (1.0 + (-za.array()).exp());
    const Vec pb = 1.0 / (1.0 + (-zb.array()).exp());
    Vec grad_w = a_fit.transpose() * (pa.array() - 1.0).matrix() +
                 b_fit.transpose() * pb;
    const double grad_b = (pa.array() - 1.0).sum() + pb.sum();
    w -= lr * inv_n * grad_w;
    bias -= lr * inv_n * grad_b;
  }

  const Vec sa = (a_eval * w).array() + bias;
  const Vec sb = (b_eval * w).array() + bias;
  const double acc_a =
      (sa.array() > 0.0).cast<double>().mean();
  const double acc_b =
      (sb.array() <= 0.0).cast<double>().mean();
  return 0.5 * (acc_a + acc_b);
}

ContentStyleSplit content_style_split(const ConcentrationMatrix& lam) {
  ContentStyleSplit split;
  const double lo = lam.min_entry();
  const double hi = lam.max_entry();
  const int d = lam.dim();
  if (hi - lo <= 0.01 * hi) {
    for (int i = 0; i < d; ++i) {
      split.content.push_back(i);
      split.style.push_back(i);
    }
    return split;
  }
  const double mid = 0.5 * (lo + hi);
  for (int i = 0; i < d; ++i) {
    (lam.diag(i) > mid ? split.content : split.style).push_back(i);
  }
  return split;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["r2_all"] = r2_all;
  j["r2_content"] = r2_content;
  j["r2_style"] = r2_style;
  j["per_dim_r2"] = std::vector<double>(per_dim_r2.data(),
                                        per_dim_r2.data() + per_dim_r2.size());
  j["eval_samples"] = eval_samples;
  j["loss"] = loss;
  j["loss_std_error"] = loss_std_error;
  j["mean_pos_sim"] = mean_pos_sim;
  j["mean_neg_sim"] = mean_neg_sim;
  j["ortho_residual"] = ortho_residual;
  if (has_lambda) {
    j["lambda_hat"] = std::vector<double>(lambda_hat.data(),
                                          lambda_hat.data() + lambda_hat.size());
    j["lambda_match"] = {
        {"rel_errors",
         std::vector<double>(lambda_match.rel_errors.data(),
                             lambda_match.rel_errors.data() +
                                 lambda_match.rel_errors.size())},
        {"max_rel_error", lambda_match.max_rel_error},
        {"mean_rel_error", lambda_match.mean_rel_error},
        {"scale", lambda_match.scale},
        {"max_scaled_rel_error", lambda_match.max_scaled_rel_error},
    };
  }
  return j.dump(2);
}

}  // namespace anicl
