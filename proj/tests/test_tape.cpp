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
#include <functional>
#include <vector>

#include "core/losses.hpp"
#include "core/mlp.hpp"
#include "core/rng.hpp"
#include "core/sphere.hpp"
#include "doctest.h"

using namespace anicl;

namespace {

struct TestNet {
  MlpNetwork net;
  Vec log_diag;  // learned scaling for the weighted-distance losses
};

TestNet random_net(int d, int layers, int width, bool normalize,
                   std::uint64_t seed) {
  TestNet t{make_encoder(d, d, layers, width, 0.2, normalize,
                         RngStream(seed, 0)),
            Vec::Zero(d)};
  RngStream rng(seed, 1);
  for (Eigen::Index i = 0; i < t.log_diag.size(); ++i) {
    t.log_diag(i) = rng.uniform(-0.5, 1.5);
  }
  return t;
}

enum class LossCase {
  kInfoNceInBatch,
  kInfoNceExplicit,
  kAnInfoNceInBatch,
  kAnInfoNceExplicit,
  kAnInfoNceInBatchPlusHard,
  kEnsembleSummed,
};

// Builds the full forward graph for one loss case and returns the loss node
// together with the parameter leaves, so the same code path serves both the
// analytic gradients and the finite-difference probes.
struct BuiltGraph {
  std::vector<NodeId> leaves;  // weights, biases, then log-diags
  NodeId loss = -1;
};

BuiltGraph build_graph(GradientTape& tape, const TestNet& a_net,
                       const Vec& log_diag2, LossCase which, const Mat& xa,
                       const Mat& xp, const Mat& xn, const Mat& xa2,
                       const Mat& xp2) {
  BuiltGraph g;
  std::vector<NodeId> wids, bids;
  for (const auto& l : a_net.net.layers) {
    wids.push_back(tape.leaf(l.weight, true));
    bids.push_back(tape.leaf(Mat(l.bias), true));
    g.leaves.push_back(wids.back());
    g.leaves.push_back(bids.back());
  }
  auto encode = [&](const Mat& x) {
    NodeId h = tape.leaf(x);
    for (std::size_t i = 0; i < wids.size(); ++i) {
      h = tape.affine(h, wids[i], bids[i]);
      if (i + 1 < wids.size()) h = tape.leaky_relu(h, a_net.net.leaky_slope);
    }
    if (a_net.net.output_normalize) h = tape.row_normalize(h);
    return h;
  };

  NodeId lam1 = -1, lam2 = -1;
  if (which != LossCase::kInfoNceInBatch && which != LossCase::kInfoNceExplicit) {
    NodeId ld = tape.leaf(Mat(a_net.log_diag), true);
    g.leaves.push_back(ld);
    lam1 = tape.exp_elem(ld);
  }
  if (which == LossCase::kEnsembleSummed) {
    NodeId ld2 = tape.leaf(Mat(log_diag2), true);
    g.leaves.push_back(ld2);
    lam2 = tape.exp_elem(ld2);
  }

  NodeId ea = encode(xa);
  NodeId ep = encode(xp);
  NegativeSet negs;
  switch (which) {
    case LossCase::kInfoNceInBatch:
      g.loss = infonce_graph(tape, ea, ep, negs, 0.7).loss;
      break;
    case LossCase::kInfoNceExplicit:
      negs.in_batch = false;
      negs.grouped = encode(xn);
      g.loss = infonce_graph(tape, ea, ep, negs, 1.3).loss;
      break;
    case LossCase::kAnInfoNceInBatch:
      g.loss = aninfonce_graph(tape, ea, ep, negs, lam1).loss;
      break;
    case LossCase::kAnInfoNceExplicit:
      negs.in_batch = false;
      negs.grouped = encode(xn);
      g.loss = aninfonce_graph(tape, ea, ep, negs, lam1).loss;
      break;
    case LossCase::kAnInfoNceInBatchPlusHard:
      negs.in_batch = true;
      negs.grouped = encode(xn);
      g.loss = aninfonce_graph(tape, ea, ep, negs, lam1).loss;
      break;
    case LossCase::kEnsembleSummed: {
      NodeId l1 = aninfonce_graph(tape, ea, ep, negs, lam1).loss;
      NodeId ea2 = encode(xa2);
      NodeId ep2 = encode(xp2);
      NodeId l2 = aninfonce_graph(tape, ea2, ep2, negs, lam2).loss;
      g.loss = tape.add(l1, l2);
      break;
    }
  }
  return g;
}

// Central finite differences against the analytic gradients over a sample
// of coordinates of every parameter tensor.
void gradcheck(LossCase which, int d, int layers, int width, bool normalize,
               int batch, std::uint64_t seed) {
  CAPTURE(static_cast<int>(which));
  CAPTURE(d);
  CAPTURE(layers);
  TestNet tn = random_net(d, layers, width, normalize, seed);
  Vec log_diag2(d);
  RngStream rng(seed, 99);
  for (int i = 0; i < d; ++i) log_diag2(i) = rng.uniform(-0.5, 1.0);

  const int m = 3;
  const Mat xa = sample_uniform_sphere(d, batch, RngStream(seed, 2)) * 1.7;
  const Mat xp = sample_uniform_sphere(d, batch, RngStream(seed, 3)) * 1.7;
  const Mat xn = sample_uniform_sphere(d, batch * m, RngStream(seed, 4)) * 1.7;
  const Mat xa2 = sample_uniform_sphere(d, batch, RngStream(seed, 5)) * 1.7;
  const Mat xp2 = sample_uniform_sphere(d, batch, RngStream(seed, 6)) * 1.7;

  auto eval_loss = [&]() {
    GradientTape tape;
    BuiltGraph g = build_graph(tape, tn, log_diag2, which, xa, xp, xn, xa2, xp2);
    return tape.value(g.loss)(0, 0);
  };

  GradientTape tape;
  BuiltGraph g = build_graph(tape, tn, log_diag2, which, xa, xp, xn, xa2, xp2);
  tape.backward(g.loss);
  std::vector<Mat> analytic;
  for (NodeId leaf : g.leaves) analytic.push_back(tape.grad(leaf));

  // Mutation hooks into the same storage the graphs are built from.
  std::vector<double*> storage;
  std::vector<long> sizes;
  for (auto& l : tn.net.layers) {
    storage.push_back(l.weight.data());
    sizes.push_back(l.weight.size());
    storage.push_back(l.bias.data());
    sizes.push_back(l.bias.size());
  }
  const bool has_lam = which != LossCase::kInfoNceInBatch &&
                       which != LossCase::kInfoNceExplicit;
  if (has_lam) {
    storage.push_back(tn.log_diag.data());
    sizes.push_back(tn.log_diag.size());
  }
  if (which == LossCase::kEnsembleSummed) {
    storage.push_back(log_diag2.data());
    sizes.push_back(log_diag2.size());
  }
  REQUIRE(storage.size() == analytic.size());

  RngStream pick(seed, 7);
  const double h = 1e-5;
  double worst = 0.0;
  int checked = 0;
  while (checked < 100) {
    const std::size_t t = pick.uniform_index(storage.size());
    const long idx = static_cast<long>(pick.uniform_index(
        static_cast<std::uint64_t>(sizes[t])));
    double* coord = storage[t] + idx;
    const double orig = *coord;
    *coord = orig + h;
    const double up = eval_loss();
    *coord = orig - h;
    const double down = eval_loss();
    *coord = orig;
    const double fd = (up - down) / (2.0 * h);
    const double an = analytic[t].data()[idx];
    const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
    worst = std::max(worst, std::abs(fd - an) / denom);
    ++checked;
  }
  CAPTURE(worst);
  CHECK(worst < 1e-4);
}

}  // namespace

TEST_CASE("taped forward matches the plain forward contract") {
  SUBCASE("zero weights give zero outputs") {
    MlpNetwork net;
    net.leaky_slope = 0.2;
    net.layers.push_back({Mat::Zero(3, 3), Vec::Zero(3)});
    const Mat x = sample_uniform_sphere(3, 8, RngStream(1, 0));
    CHECK(mlp_forward(net, x).norm() == 0.0);
  }
  SUBCASE("normalized outputs are unit rows") {
    const MlpNetwork net =
        make_encoder(4, 4, 3, 16, 0.2, true, RngStream(2, 0));
    const Mat y = mlp_forward(net, sample_uniform_sphere(4, 32, RngStream(3, 0)));
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      CHECK(std::abs(y.row(i).norm() - 1.0) <= 1e-9);
    }
  }
  SUBCASE("identity layer with normalization projects (3,4)") {
    MlpNetwork net;
    net.leaky_slope = 0.2;
    net.output_normalize = true;
    net.layers.push_back({Mat::Identity(2, 2), Vec::Zero(2)});
    Mat x(1, 2);
    x << 3.0, 4.0;
    const Mat y = mlp_forward(net, x);
    CHECK(y(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(y(0, 1) == doctest::Approx(0.8).epsilon(1e-12));
  }
}

TEST_CASE("closed-form gradient of the squared norm through one layer") {
  // loss = 0.5 ||W x + b||^2 has dW = y x^T and db = y.
  const int din = 3, dout = 2;
  Mat w(dout, din);
  w << 0.5, -1.0, 2.0, 1.5, 0.25, -0.75;
  Vec b(dout);
  b << 0.1, -0.2;
  Mat x(1, din);
  x << 0.3, 0.7, -0.4;

  GradientTape tape;
  NodeId wid = tape.leaf(w, true);
  NodeId bid = tape.leaf(Mat(b), true);
  NodeId xid = tape.leaf(x);
  NodeId y = tape.affine(xid, wid, bid);
  NodeId q = tape.paired_dot(y, y);
  NodeId loss = tape.mean_all(tape.scale(q, 0.5));
  tape.backward(loss);

  const Vec yv = (w * x.transpose() + b).col(0);
  const Mat expected_dw = yv * x;
  CHECK((tape.grad(wid) - expected_dw).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((tape.grad(bid).col(0) - yv).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("exp parametrization follows the scalar chain rule") {
  // d/dtheta of exp(theta) * c = exp(theta) * c.
  Vec theta(3);
  theta << -0.3, 0.0, 0.8;
  Vec c(3);
  c << 2.0, -1.0, 0.5;
  GradientTape tape;
  NodeId th = tape.leaf(Mat(theta), true);
  NodeId lam = tape.exp_elem(th);
  NodeId prod = tape.paired_dot(lam, tape.leaf(Mat(c)));
  NodeId loss = tape.mean_all(prod);
  tape.backward(loss);
  // mean over the 3 per-row products contributes the 1/3 factor.
  const Vec expected = theta.array().exp() * c.array() / 3.0;
  CHECK((tape.grad(th).col(0) - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("normalization backward stays tangent to the outputs") {
  const Mat x = 2.5 * sample_uniform_sphere(6, 32, RngStream(4, 0));
  GradientTape tape;
  NodeId xid = tape.leaf(x, true);
  NodeId y = tape.row_normalize(xid);
  // Arbitrary downstream scalar so every row receives a generic gradient.
  NodeId loss = tape.mean_all(tape.paired_sqdist(
      y, tape.leaf(sample_uniform_sphere(6, 32, RngStream(5, 0))),
      tape.leaf(Mat(Vec::Constant(6, 1.5)))));
  tape.backward(loss);
  const Mat& yv = tape.value(y);
  const Mat& dx = tape.grad(xid);
  for (Eigen::Index i = 0; i < yv.rows(); ++i) {
    CHECK(std::abs(dx.row(i).dot(yv.row(i))) <= 1e-9);
  }
}

TEST_CASE("detached parameters raise missing-gradient") {
  GradientTape tape;
  NodeId unused = tape.leaf(Mat::Zero(2, 2), true);
  NodeId x = tape.leaf(Mat::Ones(1, 2), true);
  NodeId loss = tape.mean_all(x);
  tape.backward(loss);
  CHECK(tape.grad(x).size() == 2);
  CHECK_THROWS_WITH_AS(tape.grad(unused), doctest::Contains("gradient"),
                       Error);
}

TEST_CASE("finite differences confirm every loss graph") {
  gradcheck(LossCase::kInfoNceInBatch, 5, 3, 12, true, 16, 101);
  gradcheck(LossCase::kInfoNceExplicit, 4, 2, 10, true, 12, 102);
  gradcheck(LossCase::kAnInfoNceInBatch, 6, 4, 14, true, 24, 103);
  gradcheck(LossCase::kAnInfoNceExplicit, 5, 3, 12, true, 16, 104);
  gradcheck(LossCase::kAnInfoNceInBatchPlusHard, 4, 3, 10, true, 12, 105);
  gradcheck(LossCase::kEnsembleSummed, 5, 2, 12, true, 16, 106);
  // Unnormalized outputs exercise the affine/activation path alone.
  gradcheck(LossCase::kAnInfoNceInBatch, 4, 3, 10, false, 16, 107);
  // Largest case allowed by the property: d = 10, 4 layers, batch 64.
  gradcheck(LossCase::kAnInfoNceInBatch, 10, 4, 20, true, 64, 108);
}
