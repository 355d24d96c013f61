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

#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "core/config.hpp"
#include "core/eval.hpp"
#include "core/mlp.hpp"
#include "core/optim.hpp"

namespace anicl {

struct MetricRow {
  long step = 0;
  double loss = 0.0;
  double r2_all = 0.0;
  double r2_content = 0.0;
  double r2_style = 0.0;
  std::vector<double> lambda_snapshot;  // k*d values, one block per loss term
  double wall_s = 0.0;
};

// One training run: sample observations, embed, score, backprop, step.
// Copyable, so a pretrained state can be forked into branches that continue
// differently (the CSV stream is not carried across copies).
class Trainer {
 public:
  explicit Trainer(TrainConfig cfg);
  Trainer(const Trainer& other);
  Trainer& operator=(const Trainer&) = delete;

  // Runs `steps` further training steps, appending metric rows every
  // eval_every. On a numeric abort the last valid checkpoint is saved to
  // the output directory first.
  void train(long steps);

  // Fresh-sample evaluation; salt separates evaluation streams.
  EvalReport evaluate(int n_samples, std::uint64_t salt) const;

  // Mean loss over fresh batches (one independent batch per term) with the
  // given conditional sampler; returns (mean, standard error of the mean).
  std::pair<double, double> estimate_loss(int n_batches,
                                          ConditionalMethod method,
                                          std::uint64_t salt) const;

  // Turns on appended per-anchor hard negatives (requires dgp.lambda_neg).
  void enable_hard_negatives(int per_anchor);

  // Replaces the encoder and learned scalings, e.g. from a checkpoint. The
  // loss kind of the config must match what the checkpoint carries.
  void load_model(const Checkpoint& ckpt);

  // Output handling. open_outputs creates the run directory, snapshots the
  // config, and starts metrics.csv; finalize writes report.json plus the
  // checkpoint.
  void open_outputs();
  void finalize();

  const TrainConfig& config() const { return cfg_; }
  const MlpNetwork& encoder() const { return encoder_; }
  const MlpNetwork& generator() const { return generator_; }
  const std::vector<LearnableConcentration>& lambdas() const { return lams_; }
  std::vector<LearnableConcentration>& lambdas() { return lams_; }
  long steps_done() const { return steps_done_; }
  double last_loss() const { return last_loss_; }
  const std::vector<MetricRow>& metrics() const { return metrics_; }
  const EvalReport& final_report() const { return final_report_; }

  Mat embed(const Mat& observations) const;

 private:
  void training_step();
  MetricRow make_metric_row();
  void append_metric_row(const MetricRow& row);
  void save_checkpoint_file() const;
  Vec lambda_snapshot_vec() const;
  DgpSpec second_dgp() const;

  TrainConfig cfg_;
  MlpNetwork generator_;
  MlpNetwork encoder_;
  std::vector<LearnableConcentration> lams_;
  AdamState adam_;
  long steps_done_ = 0;
  double last_loss_ = 0.0;
  double wall_accum_ = 0.0;
  long eval_counter_ = 0;
  std::vector<MetricRow> metrics_;
  EvalReport final_report_;
  std::string run_dir_;
  std::unique_ptr<std::ostream> csv_;
};

// Convenience wrapper: train per config, write outputs, return the report.
EvalReport run_training(const TrainConfig& cfg, bool write_outputs = true);

// Dense-telemetry variant: clamps eval_every to <= 500 so step-like
// transitions are resolved, then trains and reports as run_training.
EvalReport run_dynamics(TrainConfig cfg, bool write_outputs = true);

void write_metrics_header(std::ostream& os, int d, int k_lams);
void write_metrics_row(std::ostream& os, const MetricRow& row);

}  // namespace anicl
