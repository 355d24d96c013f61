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

#include <Eigen/QR>
#include <cmath>

#include "core/dgp.hpp"
#include "doctest.h"

using namespace anicl;

namespace {

Mat random_orthogonal(int d, RngStream rng) {
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
  return q;
}

Mat block_orthogonal(const std::vector<std::vector<int>>& blocks, int d,
                     RngStream rng) {
  Mat out = Mat::Zero(d, d);
  int salt = 0;
  for (const auto& blk : blocks) {
    const int k = static_cast<int>(blk.size());
    const Mat q = random_orthogonal(k, rng.substream(static_cast<std::uint64_t>(salt++)));
    for (int r = 0; r < k; ++r) {
      for (int c = 0; c < k; ++c) {
        out(blk[static_cast<std::size_t>(r)], blk[static_cast<std::size_t>(c)]) = q(r, c);
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("linear map fitting") {
  const int d = 10, n = 10000;
  const Mat z = sample_uniform_sphere(d, n, RngStream(50, 0));

  SUBCASE("orthogonal relation is recovered exactly") {
    const Mat o = random_orthogonal(d, RngStream(51, 0));
    const Mat pred = z * o.transpose();
    const LinearFit fit = fit_linear_map(pred, z, true);
    CHECK(fit.per_dim_r2.minCoeff() > 0.999);
  }
  SUBCASE("independent predictors carry no signal") {
    const Mat pred = sample_uniform_sphere(d, n, RngStream(52, 0));
    const LinearFit fit = fit_linear_map(pred, z, true);
    CHECK(std::abs(fit.mean_r2) < 0.05);
  }
  SUBCASE("a collapsed dimension is flagged, the rest survive") {
    Mat pred = z;
    pred.col(3).setConstant(0.25);
    const LinearFit fit = fit_linear_map(pred, z, true);
    for (int j = 0; j < d; ++j) {
      if (j == 3) {
        CHECK(std::abs(fit.per_dim_r2(j)) < 0.05);
      } else {
        CHECK(fit.per_dim_r2(j) > 0.999);
      }
    }
  }
  SUBCASE("invariance under invertible affine remodeling of predictions") {
    RngStream rng(53, 0);
    Mat a(d, d);
    for (int r = 0; r < d; ++r) {
      for (int c = 0; c < d; ++c) a(r, c) = rng.normal();
    }
    a += 3.0 * Mat::Identity(d, d);
    Vec shift(d);
    for (int i = 0; i < d; ++i) shift(i) = rng.uniform(-1.0, 1.0);
    const Mat o = random_orthogonal(d, rng.substream(1));
    const Mat pred = z * o.transpose();
    const Mat remodeled = (pred * a.transpose()).rowwise() + shift.transpose();
    const LinearFit base = fit_linear_map(pred, z, true);
    const LinearFit trans = fit_linear_map(remodeled, z, true);
    CHECK(std::abs(base.mean_r2 - trans.mean_r2) < 1e-3);
  }
  SUBCASE("sample-size precondition") {
    CHECK_THROWS_AS(fit_linear_map(z.topRows(50), z.topRows(50), true), Error);
  }
}

TEST_CASE("concentration comparison") {
  SUBCASE("permutation of the truth matches exactly") {
    Vec t(4), l(4);
    t << 1.0, 5.0, 9.0, 2.0;
    l << 9.0, 2.0, 1.0, 5.0;
    const auto cmp = compare_lambda(ConcentrationMatrix(l), ConcentrationMatrix(t));
    CHECK(cmp.max_rel_error == doctest::Approx(0.0));
  }
  SUBCASE("global rescaling is absorbed by the fitted scale") {
    Vec t(3);
    t << 2.0, 4.0, 8.0;
    const auto cmp = compare_lambda(ConcentrationMatrix(Vec(2.0 * t)),
                                    ConcentrationMatrix(t));
    CHECK(cmp.max_rel_error == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(cmp.scale == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(cmp.max_scaled_rel_error == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("worked example") {
    Vec t(2), l(2);
    t << 5.0, 25.0;
    l << 24.0, 5.2;
    const auto cmp = compare_lambda(ConcentrationMatrix(l), ConcentrationMatrix(t));
    CHECK(cmp.rel_errors(0) == doctest::Approx(0.04).epsilon(1e-12));
    CHECK(cmp.rel_errors(1) == doctest::Approx(0.04).epsilon(1e-12));
  }
  SUBCASE("symmetric under a simultaneous permutation") {
    RngStream rng(54, 0);
    Vec t(5), l(5);
    for (int i = 0; i < 5; ++i) {
      t(i) = rng.uniform(1.0, 30.0);
      l(i) = rng.uniform(1.0, 30.0);
    }
    Vec tp(5), lp(5);
    const int perm[5] = {3, 0, 4, 1, 2};
    for (int i = 0; i < 5; ++i) {
      tp(i) = t(perm[i]);
      lp(i) = l(perm[i]);
    }
    const auto a = compare_lambda(ConcentrationMatrix(l), ConcentrationMatrix(t));
    const auto b = compare_lambda(ConcentrationMatrix(lp), ConcentrationMatrix(tp));
    CHECK((a.rel_errors - b.rel_errors).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("block-orthogonality residual") {
  const int d = 8, n = 10000;
  Vec lam(d);
  lam << 5.0, 5.0, 5.0, 25.0, 25.0, 25.0, 25.0, 60.0;
  const ConcentrationMatrix lam_cm(lam);
  const Mat z = sample_uniform_sphere(d, n, RngStream(55, 0));
  const std::vector<std::vector<int>> blocks = {{0, 1, 2}, {3, 4, 5, 6}, {7}};

  SUBCASE("a block-orthogonal transform fits exactly") {
    const Mat o = block_orthogonal(blocks, d, RngStream(56, 0));
    const Mat h = z * o.transpose();
    const auto fit = orthogonality_residual(z, h, lam_cm);
    CHECK(fit.residual < 1e-10);
  }
  SUBCASE("permuted output coordinates still fit exactly") {
    const Mat o = block_orthogonal(blocks, d, RngStream(57, 0));
    Mat h = z * o.transpose();
    // Scramble output dimension order.
    const int perm[8] = {6, 2, 7, 0, 5, 1, 4, 3};
    Mat hp(n, d);
    for (int j = 0; j < d; ++j) hp.col(j) = h.col(perm[j]);
    const auto fit = orthogonality_residual(z, hp, lam_cm);
    CHECK(fit.residual < 1e-10);
  }
  SUBCASE("identity map gives residual zero with identity blocks") {
    const auto fit = orthogonality_residual(z, z, lam_cm);
    CHECK(fit.residual < 1e-18);
    CHECK((fit.transform - Mat::Identity(d, d)).cwiseAbs().maxCoeff() < 1e-9);
  }
  SUBCASE("a skewed map leaves a visible residual") {
    RngStream rng(58, 0);
    Mat skew = Mat::Identity(d, d);
    // Condition number around 10 through one strong shear.
    skew(0, 3) = 2.2;
    skew(5, 1) = -1.8;
    const Mat h = z * skew.transpose();
    const auto fit = orthogonality_residual(z, h, lam_cm);
    CHECK(fit.residual > 0.01);
  }
  SUBCASE("invariant under composing another block-orthogonal map") {
    const Mat o1 = block_orthogonal(blocks, d, RngStream(59, 0));
    const Mat h = z * o1.transpose();
    const auto base = orthogonality_residual(z, h, lam_cm);
    const Mat o2 = block_orthogonal(blocks, d, RngStream(60, 0));
    const auto composed = orthogonality_residual(z, h * o2.transpose(), lam_cm);
    CHECK(std::abs(base.residual - composed.residual) < 1e-8);
  }
  SUBCASE("insufficient samples are rejected") {
    CHECK_THROWS_AS(orthogonality_residual(z.topRows(d - 1), z.topRows(d - 1), lam_cm),
                    Error);
  }
}

TEST_CASE("overlap histograms") {
  SUBCASE("tight conditional separates positives from negatives") {
    DgpSpec dgp;
    dgp.d = 20;
    dgp.lam_pos = ConcentrationMatrix::isotropic(20, 400.0);
    dgp.generator.d = 20;
    const LatentBatch lb =
        sample_latent_batch(dgp, 512, kInBatchNegatives, RngStream(61, 0));
    const auto hist = overlap_histogram(lb.anchors, lb.positives, Mat());
    CHECK(hist.disjoint);
  }
  SUBCASE("broad conditional overlaps the uniform negatives") {
    DgpSpec dgp;
    dgp.d = 10;
    dgp.lam_pos = ConcentrationMatrix::isotropic(10, 1.0);
    dgp.generator.d = 10;
    const LatentBatch lb =
        sample_latent_batch(dgp, 512, kInBatchNegatives, RngStream(62, 0));
    const auto hist = overlap_histogram(lb.anchors, lb.positives, Mat());
    CHECK_FALSE(hist.disjoint);
  }
  SUBCASE("positives identical to anchors pile into the top bin") {
    const Mat a = sample_uniform_sphere(6, 256, RngStream(63, 0));
    const auto hist = overlap_histogram(a, a, Mat());
    long top = hist.positive_bins.back();
    long total = 0;
    for (long c : hist.positive_bins) total += c;
    CHECK(top == total);
  }
}

TEST_CASE("domain classifier") {
  SUBCASE("identical distributions sit at chance") {
    const Mat a = sample_uniform_sphere(8, 10000, RngStream(64, 0));
    const Mat b = sample_uniform_sphere(8, 10000, RngStream(65, 0));
    const double acc = domain_classifier_accuracy(a, b, RngStream(66, 0));
    CHECK(std::abs(acc - 0.5) <= 0.03);
  }
  SUBCASE("linearly separated clusters are solved") {
    Mat a = sample_uniform_sphere(8, 2000, RngStream(67, 0));
    Mat b = sample_uniform_sphere(8, 2000, RngStream(68, 0));
    a.col(0).array() += 4.0;
    b.col(0).array() -= 4.0;
    CHECK(domain_classifier_accuracy(a, b, RngStream(69, 0)) > 0.99);
  }
  SUBCASE("opposed vMF clusters are distinguishable") {
    Vec north = Vec::Zero(10);
    north(0) = 1.0;
    const Mat a = sample_vmf(VmfParams(north, 20.0), 4000, RngStream(70, 0));
    const Mat b = sample_vmf(VmfParams(-north, 20.0), 4000, RngStream(71, 0));
    CHECK(domain_classifier_accuracy(a, b, RngStream(72, 0)) > 0.95);
  }
  SUBCASE("degenerate inputs are rejected") {
    const Mat a = sample_uniform_sphere(4, 5, RngStream(73, 0));
    CHECK_THROWS_AS(domain_classifier_accuracy(a, a, RngStream(74, 0)), Error);
  }
}

TEST_CASE("content/style split follows the weight ordering") {
  Vec lam(6);
  lam << 5.0, 25.0, 5.0, 25.0, 5.0, 25.0;
  const auto split = content_style_split(ConcentrationMatrix(lam));
  CHECK(split.content == std::vector<int>{1, 3, 5});
  CHECK(split.style == std::vector<int>{0, 2, 4});

  const auto iso = content_style_split(ConcentrationMatrix::isotropic(4, 7.0));
  CHECK(iso.content.size() == 4);
  CHECK(iso.style.size() == 4);
}
