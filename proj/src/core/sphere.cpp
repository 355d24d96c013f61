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

#include "core/sphere.hpp"

#include <cmath>

namespace anicl {

namespace {

// Householder map sending the north pole e0 to mu, applied to x.
Vec rotate_from_north(const Vec& mu, const Vec& x) {
  Vec v = -mu;
  v(0) += 1.0;  // e0 - mu
  const double vn2 = v.squaredNorm();
  if (vn2 < 1e-24) return x;  // mu is (numerically) the north pole already
  return x - v * (2.0 * v.dot(x) / vn2);
}

// Radial component W of a vMF draw: density on (-1,1) proportional to
// exp(kappa*w) * (1-w^2)^((d-3)/2), sampled with the beta-envelope
// rejection scheme.
double sample_vmf_radial(int d, double kappa, RngStream& rng) {
  if (d == 2) {
    // On the circle the generic beta envelope breaks down ((d-3)/2 < 0);
    // sample the angle from the von Mises law with the wrapped-Cauchy
    // envelope (Best-Fisher) and return its cosine.
    if (kappa < 1e-6) {
      // Degenerate envelope parameters; plain rejection is near-lossless.
      for (;;) {
        const double theta = rng.uniform(-M_PI, M_PI);
        const double w = std::cos(theta);
        if (std::log(rng.uniform(0x1.0p-53, 1.0)) < kappa * (w - 1.0)) return w;
      }
    }
    const double tau = 1.0 + std::sqrt(1.0 + 4.0 * kappa * kappa);
    const double rho = (tau - std::sqrt(2.0 * tau)) / (2.0 * kappa);
    const double r = (1.0 + rho * rho) / (2.0 * rho);
    for (;;) {
      const double u1 = rng.uniform();
      const double z = std::cos(M_PI * u1);
      const double w = (1.0 + r * z) / (r + z);
      const double c = kappa * (r - w);
      const double u2 = rng.uniform();
      if (c * (2.0 - c) - u2 > 0.0) return w;
      if (std::log(c / (u2 > 0.0 ? u2 : 0x1.0p-53)) + 1.0 - c >= 0.0) return w;
    }
  }
  const double dm1 = static_cast<double>(d - 1);
  const double b =
      (-2.0 * kappa + std::sqrt(4.0 * kappa * kappa + dm1 * dm1)) / dm1;
  const double x0 = (1.0 - b) / (1.0 + b);
  const double c = kappa * x0 + dm1 * std::log(1.0 - x0 * x0);
  const double half = dm1 / 2.0;
  for (;;) {
    const double z = rng.beta(half, half);
    const double w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
    const double u = rng.uniform();
    const double lu = std::log(u > 0.0 ? u : 0x1.0p-53);
    if (kappa * w + dm1 * std::log(1.0 - x0 * w) - c >= lu) return w;
  }
}

Vec sample_uniform_one(int d, RngStream& rng) {
  Vec x(d);
  for (;;) {
    for (int i = 0; i < d; ++i) x(i) = rng.normal();
    const double n = x.norm();
    if (n > 0.0) return x / n;
  }
}

}  // namespace

VmfParams::VmfParams(Vec mu, double k) : mean_direction(std::move(mu)), kappa(k) {
  require_arg(kappa >= 0.0, "vMF kappa must be >= 0");
  require_arg(is_unit(mean_direction), "vMF mean direction must be unit norm");
}

Vec project_to_sphere(const Vec& x) {
  const double n = x.norm();
  require(n > 0.0, ErrorCode::kDegenerateInput,
          "project_to_sphere: zero vector has no direction");
  return x / n;
}

void project_rows_to_sphere(Mat& batch) {
  for (Eigen::Index i = 0; i < batch.rows(); ++i) {
    const double n = batch.row(i).norm();
    require(n > 0.0, ErrorCode::kDegenerateInput,
            "project_rows_to_sphere: zero row");
    batch.row(i) /= n;
  }
}

Mat sample_uniform_sphere(int d, int n, RngStream rng) {
  require_arg(d >= 1, "sample_uniform_sphere: d must be >= 1");
  require_arg(n >= 1, "sample_uniform_sphere: n must be >= 1");
  Mat out(n, d);
  for (int i = 0; i < n; ++i) {
    RngStream s = rng.substream(static_cast<std::uint64_t>(i));
    out.row(i) = sample_uniform_one(d, s).transpose();
  }
  return out;
}

double conditional_log_density_unnorm(const Vec& anchor, const Vec& point,
                                      const ConcentrationMatrix& lam) {
  require_arg(anchor.size() == point.size() && anchor.size() == lam.diag.size(),
              "conditional density: dimension mismatch");
  const Vec diff = point - anchor;
  return -(diff.array().square() * lam.diag.array()).sum();
}

double conditional_density_unnorm(const Vec& anchor, const Vec& point,
                                  const ConcentrationMatrix& lam) {
  return std::exp(conditional_log_density_unnorm(anchor, point, lam));
}

Vec sample_vmf_one(const Vec& mu, double kappa, RngStream& rng) {
  const int d = static_cast<int>(mu.size());
  if (kappa == 0.0) return sample_uniform_one(d, rng);
  if (d == 1) {
    // S^0 = {+1, -1} with probabilities prop. to exp(+-kappa*mu).
    const double p_pos = 1.0 / (1.0 + std::exp(-2.0 * kappa * mu(0)));
    Vec out(1);
    out(0) = rng.uniform() < p_pos ? 1.0 : -1.0;
    return out;
  }
  const double w = sample_vmf_radial(d, kappa, rng);
  Vec x(d);
  x(0) = w;
  if (d == 2) {
    const double s = rng.uniform() < 0.5 ? 1.0 : -1.0;
    x(1) = s * std::sqrt(std::max(0.0, 1.0 - w * w));
  } else {
    const Vec tangent = sample_uniform_one(d - 1, rng);
    x.tail(d - 1) = std::sqrt(std::max(0.0, 1.0 - w * w)) * tangent;
  }
  Vec out = rotate_from_north(mu, x);
  // Guard against rounding drift off the sphere.
  return out / out.norm();
}

Mat sample_vmf(const VmfParams& params, int n, RngStream rng) {
  require_arg(n >= 1, "sample_vmf: n must be >= 1");
  const int d = static_cast<int>(params.mean_direction.size());
  Mat out(n, d);
  for (int i = 0; i < n; ++i) {
    RngStream s = rng.substream(static_cast<std::uint64_t>(i));
    out.row(i) = sample_vmf_one(params.mean_direction, params.kappa, s).transpose();
  }
  return out;
}

namespace {

// Random-walk Metropolis chain targeting the anchored density. The
// proposal is a vMF step around the current state with kappa =
// 2*max(Lam), fine enough to resolve the target's sharpest direction
// while keeping acceptance moderate. The kernel is symmetric
// (q(a|b) = q(b|a)), so the acceptance ratio is the plain density ratio.
// The chain starts at the anchor, which is the mode of the target.
class ConditionalMhChain {
 public:
  ConditionalMhChain(const Vec& anchor, const ConcentrationMatrix& lam,
                     RngStream& rng)
      : anchor_(anchor), lam_(lam), rng_(rng), kappa_(2.0 * lam.max_entry()) {
    cur_ = anchor;
    cur_logpi_ = 0.0;  // density at the anchor is exactly 1
  }

  void step(int iterations) {
    for (int it = 0; it < iterations; ++it) {
      Vec prop = sample_vmf_one(cur_, kappa_, rng_);
      const double prop_logpi =
          conditional_log_density_unnorm(anchor_, prop, lam_);
      const double log_alpha = prop_logpi - cur_logpi_;
      if (log_alpha >= 0.0 ||
          std::log(rng_.uniform(0x1.0p-53, 1.0)) < log_alpha) {
        cur_ = std::move(prop);
        cur_logpi_ = prop_logpi;
      }
    }
  }

  const Vec& state() const { return cur_; }

 private:
  const Vec& anchor_;
  const ConcentrationMatrix& lam_;
  RngStream& rng_;
  double kappa_;
  Vec cur_;
  double cur_logpi_ = 0.0;
};

}  // namespace

Vec sample_conditional_one(const Vec& anchor, const ConcentrationMatrix& lam,
                           ConditionalMethod method, RngStream& rng,
                           const McmcOptions& mcmc) {
  const int d = static_cast<int>(anchor.size());
  switch (method) {
    case ConditionalMethod::kProjectedGaussian: {
      Vec x(d);
      for (int i = 0; i < d; ++i) {
        x(i) = anchor(i) + rng.normal() / std::sqrt(2.0 * lam.diag(i));
      }
      return project_to_sphere(x);
    }
    case ConditionalMethod::kExactRejection: {
      // Acceptance can be arbitrarily small for concentrated targets; cap
      // attempts so a bad envelope errors out instead of spinning.
      for (long attempt = 0; attempt < 20'000'000; ++attempt) {
        Vec prop = sample_uniform_one(d, rng);
        const double logp = conditional_log_density_unnorm(anchor, prop, lam);
        if (std::log(rng.uniform(0x1.0p-53, 1.0)) < logp) return prop;
      }
      throw_error(ErrorCode::kEnvelopeTooLoose,
                  "sample_conditional: uniform envelope acceptance below "
                  "1e-6; use the exact_mh method instead");
    }
    case ConditionalMethod::kExactMh: {
      ConditionalMhChain chain(anchor, lam, rng);
      chain.step(mcmc.burn_in);
      return chain.state();
    }
  }
  throw_error(ErrorCode::kInvalidArgument, "unknown conditional method");
}

Mat sample_conditional(const Vec& anchor, const ConcentrationMatrix& lam,
                       int n, ConditionalMethod method, RngStream rng,
                       const McmcOptions& mcmc) {
  require_arg(n >= 1, "sample_conditional: n must be >= 1");
  require_arg(is_unit(anchor), "sample_conditional: anchor must be unit norm");
  lam.validate();
  require_arg(anchor.size() == lam.diag.size(),
              "sample_conditional: dimension mismatch");

  if (method == ConditionalMethod::kExactRejection) {
    // Warm-up probe: the acceptance rate equals the spherical average of
    // the unnormalized density, estimated here by Monte Carlo.
    const int kProbe = 20000;
    RngStream probe = rng.substream(0x70726f6265ULL);
    double acc = 0.0;
    for (int i = 0; i < kProbe; ++i) {
      const Vec z = sample_uniform_one(static_cast<int>(anchor.size()), probe);
      acc += conditional_density_unnorm(anchor, z, lam);
    }
    acc /= kProbe;
    if (acc < 1e-6) {
      throw_error(ErrorCode::kEnvelopeTooLoose,
                  "sample_conditional: uniform envelope acceptance rate ~" +
                      std::to_string(acc) +
                      " is below 1e-6; use the exact_mh method instead");
    }
  }

  Mat out(n, anchor.size());
  if (method == ConditionalMethod::kExactMh) {
    // One chain for the whole batch: burn-in once, then record every
    // `thinning`-th state.
    RngStream s = rng.substream(1);
    ConditionalMhChain chain(anchor, lam, s);
    chain.step(mcmc.burn_in);
    for (int i = 0; i < n; ++i) {
      chain.step(mcmc.thinning);
      out.row(i) = chain.state().transpose();
    }
    return out;
  }
  for (int i = 0; i < n; ++i) {
    RngStream s = rng.substream(static_cast<std::uint64_t>(i) + 1);
    out.row(i) = sample_conditional_one(anchor, lam, method, s, mcmc).transpose();
  }
  return out;
}

}  // namespace anicl
