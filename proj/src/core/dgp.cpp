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

#include "core/dgp.hpp"

#include <Eigen/SVD>
#include <cmath>

namespace anicl {

void GeneratorSpec::validate() const {
  require_arg(d >= 1, "generator: d must be >= 1");
  require_arg(n_layers >= 1, "generator: n_layers must be >= 1");
  require_arg(leaky_slope > 0.0 && leaky_slope < 1.0,
              "generator: leaky slope must be in (0, 1)");
  require_arg(max_condition_number > 1.0,
              "generator: max condition number must be > 1");
}

void MarginalSpec::validate(int d) const {
  if (kind == MarginalKind::kVmfMixture) {
    require_arg(alpha >= 0.0 && alpha <= 1.0,
                "marginal: mixture weight must be in [0, 1]");
    require_arg(vmf.mean_direction.size() == d,
                "marginal: vMF pole dimension mismatch");
    require_arg(vmf.kappa >= 0.0, "marginal: vMF kappa must be >= 0");
  }
}

void DgpSpec::validate() const {
  require_arg(d >= 1, "dgp: d must be >= 1");
  lam_pos.validate();
  require_arg(lam_pos.dim() == d, "dgp: lam_pos dimension mismatch");
  if (lam_neg.has_value()) {
    lam_neg->validate();
    require_arg(lam_neg->dim() == d, "dgp: lam_neg dimension mismatch");
    require_arg((lam_pos.diag.array() > lam_neg->diag.array()).all(),
                "dgp: hard negatives need lam_pos > lam_neg entrywise");
  }
  generator.validate();
  require_arg(generator.d == d, "dgp: generator dimension mismatch");
  marginal.validate(d);
}

void EnsembleDgp::validate() const {
  generator.validate();
  require_arg(lams.size() >= 1, "ensemble: needs at least one concentration");
  for (const auto& lam : lams) {
    lam.validate();
    require_arg(lam.dim() == generator.d, "ensemble: dimension mismatch");
  }
}

namespace {

double condition_number(const Mat& m) {
  Eigen::JacobiSVD<Mat> svd(m);
  const auto& sv = svd.singularValues();
  const double smin = sv(sv.size() - 1);
  if (smin <= 0.0) return std::numeric_limits<double>::infinity();
  return sv(0) / smin;
}

// Random rotation (QR of a Gaussian matrix, signs fixed) perturbed by a
// small Gaussian so the map is a generic well-conditioned matrix rather
// than an exact isometry.
Mat rotation_like_matrix(int d, RngStream& rng) {
  Mat g(d, d);
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < d; ++c) g(r, c) = rng.normal();
  }
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ();
  Mat rmat = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int i = 0; i < d; ++i) {
    if (rmat(i, i) < 0.0) q.col(i) = -q.col(i);
  }
  Mat noise(d, d);
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < d; ++c) noise(r, c) = rng.normal();
  }
  return q + 0.2 * noise / std::sqrt(static_cast<double>(d));
}

}  // namespace

MlpNetwork make_generator(const GeneratorSpec& spec) {
  spec.validate();
  MlpNetwork net;
  net.leaky_slope = spec.leaky_slope;
  net.output_normalize = false;
  RngStream rng(spec.seed, 0x67656eULL);
  for (int i = 0; i < spec.n_layers; ++i) {
    RngStream layer_rng = rng.substream(static_cast<std::uint64_t>(i));
    Mat w;
    bool ok = false;
    for (int attempt = 0; attempt < 100; ++attempt) {
      w = rotation_like_matrix(spec.d, layer_rng);
      if (condition_number(w) <= spec.max_condition_number) {
        ok = true;
        break;
      }
    }
    require(ok, ErrorCode::kConstructionFailed,
            "make_generator: could not sample a layer with condition number <= " +
                std::to_string(spec.max_condition_number) + " in 100 attempts");
    net.layers.push_back({std::move(w), Vec::Zero(spec.d)});
  }
  net.validate();
  return net;
}

Vec invert_generator(const MlpNetwork& gen, const Vec& x) {
  gen.validate();
  require_arg(gen.input_dim() == gen.output_dim() && x.size() == gen.output_dim(),
              "invert_generator: square network and matching input required");
  Vec h = x;
  for (int i = static_cast<int>(gen.layers.size()) - 1; i >= 0; --i) {
    if (i + 1 < static_cast<int>(gen.layers.size())) {
      // LeakyReLU inverse: negative parts were scaled by the slope.
      h = h.array().min(h.array() / gen.leaky_slope).matrix();
    }
    const auto& l = gen.layers[i];
    Eigen::PartialPivLU<Mat> lu(l.weight);
    // PartialPivLU has no rank check; detect numerically singular layers
    // through the round-trip residual.
    Vec sol = lu.solve(h - l.bias);
    const double resid = (l.weight * sol - (h - l.bias)).norm();
    const double scale = std::max(1.0, h.norm());
    require(std::isfinite(resid) && resid <= 1e-6 * scale,
            ErrorCode::kSingularLayer,
            "invert_generator: numerically singular layer");
    h = std::move(sol);
  }
  return h;
}

Mat invert_generator_batch(const MlpNetwork& gen, const Mat& xs) {
  Mat out(xs.rows(), xs.cols());
  for (Eigen::Index i = 0; i < xs.rows(); ++i) {
    out.row(i) = invert_generator(gen, xs.row(i).transpose()).transpose();
  }
  return out;
}

Mat sample_marginal(const MarginalSpec& marginal, int d, int n, RngStream rng) {
  marginal.validate(d);
  if (marginal.kind == MarginalKind::kUniform) {
    return sample_uniform_sphere(d, n, rng);
  }
  Mat out(n, d);
  for (int i = 0; i < n; ++i) {
    RngStream s = rng.substream(static_cast<std::uint64_t>(i));
    if (s.uniform() < marginal.alpha) {
      out.row(i) =
          sample_vmf_one(marginal.vmf.mean_direction, marginal.vmf.kappa, s)
              .transpose();
    } else {
      out.row(i) = sample_uniform_sphere(d, 1, s.substream(1)).row(0);
    }
  }
  return out;
}

LatentBatch sample_latent_batch(const DgpSpec& dgp, int n_anchors,
                                int n_negatives, RngStream rng) {
  dgp.validate();
  require_arg(n_anchors >= 0, "sample_latent_batch: negative anchor count");
  if (n_negatives == kInBatchNegatives) {
    require_arg(n_anchors >= 2,
                "sample_latent_batch: in-batch negatives need N >= 2");
  } else {
    require_arg(n_negatives >= 0, "sample_latent_batch: bad negative count");
  }

  LatentBatch batch;
  batch.negatives_per_anchor = n_negatives;
  if (n_anchors == 0) {
    batch.anchors.resize(0, dgp.d);
    batch.positives.resize(0, dgp.d);
    batch.negatives.resize(0, dgp.d);
    return batch;
  }

  batch.anchors = sample_marginal(dgp.marginal, dgp.d, n_anchors,
                                  rng.substream(0x616eULL));
  batch.positives.resize(n_anchors, dgp.d);
  RngStream pos_rng = rng.substream(0x706fULL);
  for (int i = 0; i < n_anchors; ++i) {
    RngStream s = pos_rng.substream(static_cast<std::uint64_t>(i));
    batch.positives.row(i) =
        sample_conditional_one(batch.anchors.row(i).transpose(), dgp.lam_pos,
                               dgp.conditional_method, s, dgp.mcmc)
            .transpose();
  }

  if (n_negatives == kInBatchNegatives || n_negatives == 0) {
    batch.negatives.resize(0, dgp.d);
    return batch;
  }
  batch.negatives.resize(static_cast<Eigen::Index>(n_anchors) * n_negatives,
                         dgp.d);
  RngStream neg_rng = rng.substream(0x6e65ULL);
  for (int i = 0; i < n_anchors; ++i) {
    for (int m = 0; m < n_negatives; ++m) {
      RngStream s = neg_rng.substream(
          static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(n_negatives) + m);
      const Eigen::Index row = static_cast<Eigen::Index>(i) * n_negatives + m;
      if (dgp.lam_neg.has_value()) {
        batch.negatives.row(row) =
            sample_conditional_one(batch.anchors.row(i).transpose(),
                                   *dgp.lam_neg, dgp.conditional_method, s,
                                   dgp.mcmc)
                .transpose();
      } else {
        batch.negatives.row(row) = sample_uniform_sphere(dgp.d, 1, s).row(0);
      }
    }
  }
  return batch;
}

ObservationBatch generate_observations(const MlpNetwork& gen,
                                       const LatentBatch& batch) {
  gen.validate();
  require_arg(batch.anchors.cols() == gen.input_dim(),
              "generate_observations: dimension mismatch");
  ObservationBatch obs;
  obs.negatives_per_anchor = batch.negatives_per_anchor;
  obs.latents = batch;
  obs.anchors = batch.anchors.rows() > 0 ? mlp_forward(gen, batch.anchors)
                                         : Mat(0, gen.output_dim());
  obs.positives = batch.positives.rows() > 0 ? mlp_forward(gen, batch.positives)
                                             : Mat(0, gen.output_dim());
  obs.negatives = batch.negatives.rows() > 0 ? mlp_forward(gen, batch.negatives)
                                             : Mat(0, gen.output_dim());
  return obs;
}

}  // namespace anicl
