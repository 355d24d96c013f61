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

#include <string>

#include "core/config.hpp"
#include "core/trainer.hpp"

namespace anicl {

// One entry per CLI verb. Each consumes its keys from the config surface,
// rejects unknown keys, writes outputs under the configured directory and
// returns a JSON summary (also written to <out>/summary.json where noted).
//
// Sweep-style entries run their cells in a worker pool; a failing cell is
// recorded in the summary and the entry throws after all cells finished,
// so sibling cells are never lost.

// Single training run; summary is the final report JSON.
std::string harness_run(const KvConfig& kv);

// sweep.kind selects the axis layout:
//   lambda:    sweep.lambda2_values x {infonce, aninfonce}
//   dim_batch: sweep.d_values at sweep.fixed_batch plus sweep.batch_values
//              at sweep.fixed_d, each repeated over sweep.seeds
//   generic:   sweep.param / sweep.values over sweep.seeds
std::string harness_sweep(const KvConfig& kv);

// Loss-vs-gamma scan over hard-negative batches with a fixed encoder.
std::string harness_hn_scan(const KvConfig& kv);

// Pretrain, then fork: continued regular training vs. training with
// appended hard negatives, equal step budgets.
std::string harness_hn_finetune(const KvConfig& kv);

// Two-process comparison: InfoNCE vs AnInfoNCE vs the summed ensemble.
std::string harness_ensemble(const KvConfig& kv);

// Train/test marginal mismatch sweep over shift.kappas.
std::string harness_marginal_shift(const KvConfig& kv);

// Re-evaluate a checkpoint against the configured process.
std::string harness_eval(const KvConfig& kv, const std::string& checkpoint_path);

// Monte-Carlo minimal-loss oracle for the configured process.
std::string harness_oracle(const KvConfig& kv);

// Rank correlation helper shared by the marginal-shift experiment and its
// tests.
double spearman_correlation(const std::vector<double>& a,
                            const std::vector<double>& b);

}  // namespace anicl
