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

#include "core/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "core/dgp.hpp"
#include "core/losses.hpp"
#include "core/tape.hpp"

namespace anicl {

namespace {

constexpr std::uint64_t kEvalStreamBase = 1ULL << 62;
constexpr std::uint64_t kReportStreamBase = 1ULL << 63;
constexpr std::uint64_t kLossStreamBase = 3ULL << 60;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

}  // namespace

Trainer::Trainer(TrainConfig cfg)
    : cfg_(std::move(cfg)),
      generator_(make_generator(cfg_.dgp.generator)),
      encoder_(make_encoder(cfg_.dgp.d, cfg_.dgp.d, cfg_.encoder_layers,
                            cfg_.resolved_encoder_width(), cfg_.encoder_slope,
                            cfg_.encoder_normalize,
                            RngStream(cfg_.seed, 0xE4C0DEULL))),
      adam_(cfg_.adam) {
  cfg_.validate();
  if (cfg_.loss_kind == LossKind::kAnInfoNce) {
    lams_.emplace_back(cfg_.dgp.d);
  } else if (cfg_.loss_kind == LossKind::kEnsemble) {
    lams_.emplace_back(cfg_.dgp.d);
    lams_.emplace_back(cfg_.dgp.d);
  }
}

Trainer::Trainer(const Trainer& other)
    : cfg_(other.cfg_),
      generator_(other.generator_),
      encoder_(other.encoder_),
      lams_(other.lams_),
      adam_(other.adam_),
      steps_done_(other.steps_done_),
      last_loss_(other.last_loss_),
      wall_accum_(other.wall_accum_),
      eval_counter_(other.eval_counter_),
      metrics_(other.metrics_),
      final_report_(other.final_report_),
      run_dir_() {}  // the CSV stream stays with the original

DgpSpec Trainer::second_dgp() const {
  DgpSpec d2 = cfg_.dgp;
  d2.lam_pos = *cfg_.ensemble_lambda2;
  return d2;
}

Mat Trainer::embed(const Mat& observations) const {
  return mlp_forward(encoder_, observations);
}

void Trainer::load_model(const Checkpoint& ckpt) {
  require_arg(ckpt.encoder.input_dim() == cfg_.dgp.d &&
                  ckpt.encoder.output_dim() == cfg_.dgp.d,
              "load_model: checkpoint dimensions do not match the config");
  if (cfg_.loss_kind == LossKind::kInfoNce) {
    require_arg(ckpt.log_diags.empty(),
                "load_model: checkpoint carries learned scalings but the "
                "config selects the dot-product loss");
  } else {
    require_arg(ckpt.log_diags.size() == lams_.size(),
                "load_model: checkpoint scaling count does not match the "
                "configured loss");
  }
  encoder_ = ckpt.encoder;
  lams_.clear();
  for (const auto& ld : ckpt.log_diags) {
    require_arg(ld.size() == cfg_.dgp.d, "load_model: scaling dim mismatch");
    lams_.emplace_back(ld);
  }
}

void Trainer::enable_hard_negatives(int per_anchor) {
  require_arg(per_anchor >= 0, "hard negatives count must be >= 0");
  if (per_anchor > 0) {
    require_arg(cfg_.dgp.lam_neg.has_value(),
                "hard negatives need dgp.lambda_neg");
  }
  cfg_.hard_negatives = per_anchor;
}

void Trainer::training_step() {
  const int n = cfg_.batch_size;
  const bool in_batch = cfg_.negatives == kInBatchNegatives;
  const std::uint64_t step_base = 8ULL * static_cast<std::uint64_t>(steps_done_);

  GradientTape tape;
  std::vector<NodeId> wids, bids;
  wids.reserve(encoder_.layers.size());
  for (auto& l : encoder_.layers) {
    wids.push_back(tape.leaf(l.weight, true));
    bids.push_back(tape.leaf(Mat(l.bias), true));
  }
  std::vector<NodeId> lam_leaves, lam_nodes;
  for (auto& lam : lams_) {
    NodeId ld = tape.leaf(Mat(lam.log_diag), true);
    lam_leaves.push_back(ld);
    lam_nodes.push_back(tape.exp_elem(ld));
  }

  auto encode = [&](const Mat& x) -> NodeId {
    NodeId h = tape.leaf(x);
    for (std::size_t i = 0; i < wids.size(); ++i) {
      h = tape.affine(h, wids[i], bids[i]);
      if (i + 1 < wids.size()) h = tape.leaky_relu(h, cfg_.encoder_slope);
    }
    if (cfg_.encoder_normalize) h = tape.row_normalize(h);
    return h;
  };

  auto build_term = [&](const DgpSpec& dgp, int lam_index,
                        std::uint64_t slot) -> NodeId {
    RngStream bs(cfg_.seed, step_base + slot);
    LatentBatch lb = sample_latent_batch(dgp, n, cfg_.negatives, bs);
    if (cfg_.hard_negatives > 0) {
      // Per-anchor hard negatives appended to the regular set.
      const int h = cfg_.hard_negatives;
      const int m = in_batch ? 0 : cfg_.negatives;
      Mat combined(static_cast<Eigen::Index>(n) * (m + h), dgp.d);
      RngStream hs(cfg_.seed, step_base + slot + 3);
      for (int i = 0; i < n; ++i) {
        if (m > 0) {
          combined.middleRows(static_cast<Eigen::Index>(i) * (m + h), m) =
              lb.negatives.middleRows(static_cast<Eigen::Index>(i) * m, m);
        }
        for (int j = 0; j < h; ++j) {
          RngStream s = hs.substream(static_cast<std::uint64_t>(i) *
                                         static_cast<std::uint64_t>(h) +
                                     j);
          combined.row(static_cast<Eigen::Index>(i) * (m + h) + m + j) =
              sample_conditional_one(lb.anchors.row(i).transpose(),
                                     *dgp.lam_neg, dgp.conditional_method, s,
                                     dgp.mcmc)
                  .transpose();
        }
      }
      lb.negatives = std::move(combined);
      lb.negatives_per_anchor = m + h;
    }
    ObservationBatch ob = generate_observations(generator_, lb);

    NodeId a = encode(ob.anchors);
    NodeId p = encode(ob.positives);
    NegativeSet negs;
    negs.in_batch = in_batch;
    if (ob.negatives.rows() > 0) negs.grouped = encode(ob.negatives);
    if (cfg_.loss_kind == LossKind::kInfoNce) {
      return infonce_graph(tape, a, p, negs, cfg_.tau).loss;
    }
    return aninfonce_graph(tape, a, p, negs, lam_nodes[static_cast<std::size_t>(
                                                 lam_index)])
        .loss;
  };

  NodeId loss;
  if (cfg_.loss_kind == LossKind::kEnsemble) {
    if (cfg_.ensemble_update == EnsembleUpdate::kSummed) {
      NodeId l1 = build_term(cfg_.dgp, 0, 0);
      NodeId l2 = build_term(second_dgp(), 1, 1);
      loss = tape.add(l1, l2);
    } else {
      const bool even = steps_done_ % 2 == 0;
      loss = build_term(even ? cfg_.dgp : second_dgp(), even ? 0 : 1,
                        even ? 0 : 1);
    }
  } else {
    loss = build_term(cfg_.dgp, 0, 0);
  }

  tape.backward(loss);

  std::vector<ParamRef> params;
  std::vector<Mat> grads;
  auto grad_or_zero = [&](NodeId id, Eigen::Index rows, Eigen::Index cols) {
    try {
      return tape.grad(id);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kMissingGradient) throw;
      return Mat(Mat::Zero(rows, cols));
    }
  };
  for (std::size_t i = 0; i < encoder_.layers.size(); ++i) {
    auto& l = encoder_.layers[i];
    params.push_back(param_ref(l.weight));
    grads.push_back(tape.grad(wids[i]));
    params.push_back(param_ref(l.bias));
    grads.push_back(tape.grad(bids[i]));
  }
  for (std::size_t i = 0; i < lams_.size(); ++i) {
    params.push_back(param_ref(lams_[i].log_diag));
    grads.push_back(grad_or_zero(lam_leaves[i], cfg_.dgp.d, 1));
  }
  adam_.step(params, grads);
  last_loss_ = tape.value(loss)(0, 0);
  ++steps_done_;
}

Vec Trainer::lambda_snapshot_vec() const {
  if (lams_.empty()) {
    // Implied isotropic equivalent of the dot-product loss at temperature
    // tau: scaling tau matches lambda = 1/(2*tau) for unit-norm embeddings.
    return Vec::Constant(cfg_.dgp.d, 1.0 / (2.0 * cfg_.tau));
  }
  Vec out(static_cast<Eigen::Index>(lams_.size()) * cfg_.dgp.d);
  for (std::size_t i = 0; i < lams_.size(); ++i) {
    out.segment(static_cast<Eigen::Index>(i) * cfg_.dgp.d, cfg_.dgp.d) =
        lams_[i].log_diag.array().exp();
  }
  return out;
}

MetricRow Trainer::make_metric_row() {
  MetricRow row;
  row.step = steps_done_;
  row.loss = last_loss_;
  RngStream es(cfg_.seed,
               kEvalStreamBase + 8ULL * static_cast<std::uint64_t>(eval_counter_));
  ++eval_counter_;
  LatentBatch lb =
      sample_latent_batch(cfg_.dgp, cfg_.eval_batch, kInBatchNegatives, es);
  ObservationBatch ob = generate_observations(generator_, lb);
  const Mat emb = embed(ob.anchors);
  const LinearFit fit = fit_linear_map(emb, lb.anchors, true);
  const ContentStyleSplit split = content_style_split(cfg_.dgp.lam_pos);
  row.r2_all = fit.mean_r2;
  row.r2_content = mean_over(fit.per_dim_r2, split.content);
  row.r2_style = mean_over(fit.per_dim_r2, split.style);
  const Vec snap = lambda_snapshot_vec();
  row.lambda_snapshot.assign(snap.data(), snap.data() + snap.size());
  row.wall_s = wall_accum_;
  return row;
}

void Trainer::append_metric_row(const MetricRow& row) {
  metrics_.push_back(row);
  if (csv_) {
    write_metrics_row(*csv_, row);
    csv_->flush();
  }
}

void Trainer::train(long steps) {
  require_arg(steps >= 0, "train: steps must be >= 0");
  const auto t0 = std::chrono::steady_clock::now();
  const double wall_base = wall_accum_;
  if (steps_done_ == 0 && steps > 0) {
    // Step-0 row records the untrained encoder, including its loss on
    // fresh batches (no gradient step has run yet).
    MetricRow row = make_metric_row();
    row.loss = estimate_loss(2, cfg_.dgp.conditional_method, 0x57A57ULL).first;
    append_metric_row(row);
  }
  for (long s = 0; s < steps; ++s) {
    try {
      training_step();
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kNumericOverflow && !run_dir_.empty()) {
        save_checkpoint_file();
      }
      throw;
    }
    if (steps_done_ % cfg_.eval_every == 0 || s + 1 == steps) {
      wall_accum_ = wall_base + seconds_since(t0);
      append_metric_row(make_metric_row());
    }
  }
  wall_accum_ = wall_base + seconds_since(t0);
}

EvalReport Trainer::evaluate(int n_samples, std::uint64_t salt) const {
  EvalReport report;
  RngStream es(cfg_.seed, kReportStreamBase ^ (salt * 0x9e3779b97f4a7c15ULL));
  LatentBatch lb =
      sample_latent_batch(cfg_.dgp, n_samples, kInBatchNegatives, es);
  ObservationBatch ob = generate_observations(generator_, lb);
  const Mat emb = embed(ob.anchors);
  const LinearFit fit = fit_linear_map(emb, lb.anchors, true);
  const ContentStyleSplit split = content_style_split(cfg_.dgp.lam_pos);
  report.r2_all = fit.mean_r2;
  report.r2_content = mean_over(fit.per_dim_r2, split.content);
  report.r2_style = mean_over(fit.per_dim_r2, split.style);
  report.per_dim_r2 = fit.per_dim_r2;
  report.eval_samples = fit.eval_samples;
  report.ortho_residual =
      orthogonality_residual(lb.anchors, emb, cfg_.dgp.lam_pos).residual;
  if (!lams_.empty()) {
    report.has_lambda = true;
    const ConcentrationMatrix lam_hat = lams_[0].materialize();
    report.lambda_hat = lam_hat.diag;
    report.lambda_match = compare_lambda(lam_hat, cfg_.dgp.lam_pos);
  }
  const auto [loss_mean, loss_se] =
      estimate_loss(16, cfg_.dgp.conditional_method, salt ^ 0x10551ULL);
  report.loss = loss_mean;
  report.loss_std_error = loss_se;

  // Similarity diagnostics from the embedded positive pairs.
  const Mat emb_pos = embed(ob.positives);
  report.mean_pos_sim =
      (emb.array() * emb_pos.array()).rowwise().sum().mean();
  const Mat g = emb * emb.transpose();
  report.mean_neg_sim = (g.sum() - g.trace()) /
                        (static_cast<double>(emb.rows()) * (emb.rows() - 1));
  return report;
}

std::pair<double, double> Trainer::estimate_loss(int n_batches,
                                                 ConditionalMethod method,
                                                 std::uint64_t salt) const {
  require_arg(n_batches >= 2, "estimate_loss: need at least 2 batches");
  std::vector<double> batch_means;
  batch_means.reserve(static_cast<std::size_t>(n_batches));
  DgpSpec dgp = cfg_.dgp;
  dgp.conditional_method = method;
  DgpSpec dgp2;
  if (cfg_.loss_kind == LossKind::kEnsemble) {
    dgp2 = second_dgp();
    dgp2.conditional_method = method;
  }
  for (int b = 0; b < n_batches; ++b) {
    RngStream s(cfg_.seed,
                kLossStreamBase + salt * 4096ULL + static_cast<std::uint64_t>(b));
    double total = 0.0;
    const int terms = cfg_.loss_kind == LossKind::kEnsemble ? 2 : 1;
    for (int t = 0; t < terms; ++t) {
      const DgpSpec& d = t == 0 ? dgp : dgp2;
      LatentBatch lb = sample_latent_batch(d, cfg_.batch_size, cfg_.negatives,
                                           s.substream(static_cast<std::uint64_t>(t)));
      ObservationBatch ob = generate_observations(generator_, lb);
      const Mat a = embed(ob.anchors);
      const Mat p = embed(ob.positives);
      const Mat negs = ob.negatives.rows() > 0 ? embed(ob.negatives) : Mat();
      if (cfg_.loss_kind == LossKind::kInfoNce) {
        total += infonce_loss(a, p, negs, cfg_.tau).value;
      } else {
        total += aninfonce_loss(a, p, negs,
                                lams_[static_cast<std::size_t>(t)].materialize())
                     .value;
      }
    }
    batch_means.push_back(total);
  }
  double mean = 0.0;
  for (double v : batch_means) mean += v;
  mean /= static_cast<double>(n_batches);
  double var = 0.0;
  for (double v : batch_means) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n_batches - 1);
  return {mean, std::sqrt(var / static_cast<double>(n_batches))};
}

void Trainer::open_outputs() {
  run_dir_ = cfg_.out_dir;
  std::filesystem::create_directories(run_dir_);
  auto os = std::make_unique<std::ofstream>(run_dir_ + "/metrics.csv");
  require(static_cast<bool>(*os), ErrorCode::kIo,
          "trainer: cannot open metrics.csv in " + run_dir_);
  write_metrics_header(*os, cfg_.dgp.d,
                       lams_.empty() ? 1 : static_cast<int>(lams_.size()));
  csv_ = std::move(os);
  for (const auto& row : metrics_) write_metrics_row(*csv_, row);
  csv_->flush();
}

void Trainer::save_checkpoint_file() const {
  if (run_dir_.empty()) return;
  Checkpoint ckpt;
  ckpt.encoder = encoder_;
  for (const auto& lam : lams_) ckpt.log_diags.push_back(lam.log_diag);
  save_checkpoint(ckpt, run_dir_ + "/checkpoint.bin");
}

void Trainer::finalize() {
  final_report_ = evaluate(cfg_.final_eval_samples, 0xF1AA1ULL);
  if (run_dir_.empty()) return;
  save_checkpoint_file();
  std::ofstream os(run_dir_ + "/report.json");
  require(static_cast<bool>(os), ErrorCode::kIo,
          "trainer: cannot write report.json in " + run_dir_);
  os << final_report_.to_json() << "\n";
}

void write_metrics_header(std::ostream& os, int d, int k_lams) {
  os << "step,loss,r2_all,r2_content,r2_style";
  for (int k = 0; k < k_lams; ++k) {
    for (int i = 0; i < d; ++i) {
      if (k == 0) {
        os << ",lambda_hat_" << i;
      } else {
        os << ",lambda" << (k + 1) << "_hat_" << i;
      }
    }
  }
  os << ",wall_s\n";
}

void write_metrics_row(std::ostream& os, const MetricRow& row) {
  os.precision(12);
  os << row.step << ',' << row.loss << ',' << row.r2_all << ','
     << row.r2_content << ',' << row.r2_style;
  for (double v : row.lambda_snapshot) os << ',' << v;
  os << ',' << row.wall_s << "\n";
}

EvalReport run_training(const TrainConfig& cfg, bool write_outputs) {
  Trainer t(cfg);
  if (write_outputs) t.open_outputs();
  t.train(cfg.steps);
  t.finalize();
  return t.final_report();
}

EvalReport run_dynamics(TrainConfig cfg, bool write_outputs) {
  cfg.eval_every = std::min<long>(cfg.eval_every, 500);
  return run_training(cfg, write_outputs);
}

}  // namespace anicl
