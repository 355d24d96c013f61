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

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "core/dgp.hpp"
#include "core/losses.hpp"
#include "core/optim.hpp"

namespace anicl {

// Flat dotted key = value store. Lines are `key = value`, blank lines and
// `#` comments are ignored. Keys are case-sensitive. Every key has a
// default and can be overridden from the CLI with --set key=value.
class KvConfig {
 public:
  KvConfig() = default;

  static KvConfig from_file(const std::string& path);
  static KvConfig from_string(const std::string& text);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  // Typed getters; parse failures raise config errors naming the key.
  std::string get_string(const std::string& key, const std::string& dflt) const;
  double get_double(const std::string& key, double dflt) const;
  long get_long(const std::string& key, long dflt) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t dflt) const;
  bool get_bool(const std::string& key, bool dflt) const;
  // Comma list of doubles; each token may be `v` or `vxK` (v repeated K
  // times), e.g. "5x5,25x5".
  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& dflt) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

  // Keys read so far; used to reject unknown keys after building a config.
  void mark_consumed(const std::string& key) const;
  std::vector<std::string> unconsumed_keys() const;
  void check_fully_consumed() const;

  std::string to_string() const;

 private:
  std::map<std::string, std::string> entries_;
  mutable std::map<std::string, bool> consumed_;
};

// Expands a lambda list against the latent dimension: a single value
// broadcasts to all dimensions.
Vec expand_lambda_list(const std::vector<double>& values, int d,
                       const std::string& key);

enum class EnsembleUpdate { kSummed, kAlternating };

// Full description of one training run.
struct TrainConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "out";

  DgpSpec dgp;

  int encoder_layers = 6;
  int encoder_width = 0;  // 0 = 10 * d
  double encoder_slope = 0.2;
  bool encoder_normalize = true;

  LossKind loss_kind = LossKind::kAnInfoNce;
  double tau = 1.0;
  // kInBatchNegatives or an explicit per-anchor count.
  int negatives = kInBatchNegatives;
  // Per-anchor hard negatives appended on top of the regular ones
  // (requires dgp.lam_neg).
  int hard_negatives = 0;

  // Second process of a two-DGP ensemble (loss.kind = ensemble).
  std::optional<ConcentrationMatrix> ensemble_lambda2;
  EnsembleUpdate ensemble_update = EnsembleUpdate::kSummed;

  long steps = 10000;
  int batch_size = 512;
  long eval_every = 500;
  int eval_batch = 2048;
  int final_eval_samples = 10000;

  AdamParams adam;

  int resolved_encoder_width() const {
    return encoder_width > 0 ? encoder_width : 10 * dgp.d;
  }

  void validate() const;
};

// Builds and validates a TrainConfig from the key-value surface; rejects
// unknown keys. The documented schema lives in the README.
TrainConfig build_train_config(const KvConfig& kv);

}  // namespace anicl
