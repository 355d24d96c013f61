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

#include "core/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace anicl {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

[[noreturn]] void config_error(const std::string& key, const std::string& what) {
  throw_error(ErrorCode::kConfigParse, "config key '" + key + "': " + what);
}

}  // namespace

KvConfig KvConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), ErrorCode::kIo,
          "config: cannot open: " + path);
  std::stringstream buf;
  buf << is.rdbuf();
  return from_string(buf.str());
}

KvConfig KvConfig::from_string(const std::string& text) {
  KvConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorCode::kConfigParse,
            "config: line " + std::to_string(lineno) + " is not 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    require(!key.empty(), ErrorCode::kConfigParse,
            "config: empty key on line " + std::to_string(lineno));
    cfg.entries_[key] = value;
  }
  return cfg;
}

void KvConfig::set(const std::string& key, const std::string& value) {
  require(!trim(key).empty(), ErrorCode::kConfigParse, "config: empty key");
  entries_[trim(key)] = trim(value);
}

bool KvConfig::has(const std::string& key) const {
  return entries_.count(key) > 0;
}

void KvConfig::mark_consumed(const std::string& key) const {
  consumed_[key] = true;
}

std::string KvConfig::get_string(const std::string& key,
                                 const std::string& dflt) const {
  mark_consumed(key);
  const auto it = entries_.find(key);
  return it == entries_.end() ? dflt : it->second;
}

double KvConfig::get_double(const std::string& key, double dflt) const {
  mark_consumed(key);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return dflt;
  try {
    std::size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) config_error(key, "trailing characters");
    return v;
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    config_error(key, "expected a number, got '" + it->second + "'");
  }
}

long KvConfig::get_long(const std::string& key, long dflt) const {
  mark_consumed(key);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return dflt;
  try {
    std::size_t pos = 0;
    const long v = std::stol(it->second, &pos);
    if (pos != it->second.size()) config_error(key, "trailing characters");
    return v;
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    config_error(key, "expected an integer, got '" + it->second + "'");
  }
}

std::uint64_t KvConfig::get_u64(const std::string& key,
                                std::uint64_t dflt) const {
  mark_consumed(key);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return dflt;
  try {
    std::size_t pos = 0;
    const std::uint64_t v = std::stoull(it->second, &pos);
    if (pos != it->second.size()) config_error(key, "trailing characters");
    return v;
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    config_error(key, "expected an unsigned integer, got '" + it->second + "'");
  }
}

bool KvConfig::get_bool(const std::string& key, bool dflt) const {
  mark_consumed(key);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return dflt;
  std::string v = it->second;
  std::transform(v.begin(), v.end(), v.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  config_error(key, "expected a boolean, got '" + it->second + "'");
}

std::vector<double> KvConfig::get_double_list(
    const std::string& key, const std::vector<double>& dflt) const {
  mark_consumed(key);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return dflt;
  std::vector<double> out;
  std::istringstream is(it->second);
  std::string token;
  while (std::getline(is, token, ',')) {
    token = trim(token);
    if (token.empty()) continue;
    int repeat = 1;
    const auto x = token.find('x');
    std::string value_part = token;
    if (x != std::string::npos) {
      value_part = trim(token.substr(0, x));
      const std::string rep_part = trim(token.substr(x + 1));
      try {
        repeat = std::stoi(rep_part);
      } catch (const std::exception&) {
        config_error(key, "bad repeat count in '" + token + "'");
      }
      if (repeat < 1) config_error(key, "repeat count must be >= 1");
    }
    double value = 0.0;
    try {
      value = std::stod(value_part);
    } catch (const std::exception&) {
      config_error(key, "bad number '" + value_part + "'");
    }
    out.insert(out.end(), static_cast<std::size_t>(repeat), value);
  }
  if (out.empty()) config_error(key, "empty list");
  return out;
}

std::vector<std::string> KvConfig::unconsumed_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) {
    if (!consumed_.count(k)) out.push_back(k);
  }
  return out;
}

void KvConfig::check_fully_consumed() const {
  const auto leftovers = unconsumed_keys();
  if (leftovers.empty()) return;
  std::string msg = "config: unknown key(s):";
  for (const auto& k : leftovers) msg += " '" + k + "'";
  throw_error(ErrorCode::kConfigParse, msg);
}

std::string KvConfig::to_string() const {
  std::ostringstream os;
  for (const auto& [k, v] : entries_) os << k << " = " << v << "\n";
  return os.str();
}

Vec expand_lambda_list(const std::vector<double>& values, int d,
                       const std::string& key) {
  if (values.size() == 1) return Vec::Constant(d, values[0]);
  if (static_cast<int>(values.size()) != d) {
    config_error(key, "expected 1 or " + std::to_string(d) + " values, got " +
                          std::to_string(values.size()));
  }
  Vec out(d);
  for (int i = 0; i < d; ++i) out(i) = values[static_cast<std::size_t>(i)];
  return out;
}

void TrainConfig::validate() const {
  dgp.validate();
  require_arg(encoder_layers >= 1, "config: encoder.layers must be >= 1");
  require_arg(encoder_slope > 0.0 && encoder_slope < 1.0,
              "config: encoder.slope must be in (0, 1)");
  require_arg(tau > 0.0, "config: loss.tau must be > 0");
  require_arg(steps >= 0, "config: train.steps must be >= 0");
  require_arg(batch_size >= 2, "config: train.batch_size must be >= 2");
  require_arg(eval_every >= 1, "config: train.eval_every must be >= 1");
  require_arg(eval_batch >= 2, "config: train.eval_batch must be >= 2");
  require_arg(final_eval_samples >= 10 * dgp.d,
              "config: train.final_eval_samples must be >= 10*d");
  require_arg(negatives == kInBatchNegatives || negatives >= 1,
              "config: loss.negatives must be 'in-batch' or >= 1");
  require_arg(hard_negatives >= 0, "config: loss.hard_negatives must be >= 0");
  if (hard_negatives > 0) {
    require_arg(dgp.lam_neg.has_value(),
                "config: loss.hard_negatives needs dgp.lambda_neg");
  }
  if (loss_kind == LossKind::kEnsemble) {
    require_arg(ensemble_lambda2.has_value(),
                "config: ensemble loss needs ensemble.lambda2");
    require_arg(ensemble_lambda2->dim() == dgp.d,
                "config: ensemble.lambda2 dimension mismatch");
  }
}

TrainConfig build_train_config(const KvConfig& kv) {
  TrainConfig cfg;
  cfg.seed = kv.get_u64("seed", 0);
  cfg.out_dir = kv.get_string("out", "out");

  const int d = static_cast<int>(kv.get_long("dgp.d", 10));
  require_arg(d >= 1, "config: dgp.d must be >= 1");
  cfg.dgp.d = d;
  cfg.dgp.lam_pos = ConcentrationMatrix(
      expand_lambda_list(kv.get_double_list("dgp.lambda", {10.0}), d, "dgp.lambda"));
  if (kv.has("dgp.lambda_neg")) {
    cfg.dgp.lam_neg = ConcentrationMatrix(expand_lambda_list(
        kv.get_double_list("dgp.lambda_neg", {}), d, "dgp.lambda_neg"));
  } else {
    kv.mark_consumed("dgp.lambda_neg");
  }

  const std::string cond = kv.get_string("dgp.conditional", "projected_gaussian");
  if (cond == "projected_gaussian") {
    cfg.dgp.conditional_method = ConditionalMethod::kProjectedGaussian;
  } else if (cond == "exact_mh") {
    cfg.dgp.conditional_method = ConditionalMethod::kExactMh;
  } else if (cond == "exact_rejection") {
    cfg.dgp.conditional_method = ConditionalMethod::kExactRejection;
  } else {
    throw_error(ErrorCode::kConfigParse,
                "config: dgp.conditional must be projected_gaussian, exact_mh "
                "or exact_rejection");
  }
  cfg.dgp.mcmc.burn_in = static_cast<int>(kv.get_long("dgp.mh.burn_in", 200));
  cfg.dgp.mcmc.thinning = static_cast<int>(kv.get_long("dgp.mh.thinning", 5));

  const std::string marginal = kv.get_string("dgp.marginal", "uniform");
  if (marginal == "uniform") {
    cfg.dgp.marginal.kind = MarginalKind::kUniform;
    kv.mark_consumed("dgp.marginal.kappa");
    kv.mark_consumed("dgp.marginal.alpha");
    kv.mark_consumed("dgp.marginal.pole");
  } else if (marginal == "vmf_mixture") {
    cfg.dgp.marginal.kind = MarginalKind::kVmfMixture;
    Vec pole = Vec::Zero(d);
    const std::string pole_name = kv.get_string("dgp.marginal.pole", "north");
    if (pole_name == "north") {
      pole(0) = 1.0;
    } else if (pole_name == "south") {
      pole(0) = -1.0;
    } else {
      throw_error(ErrorCode::kConfigParse,
                  "config: dgp.marginal.pole must be north or south");
    }
    cfg.dgp.marginal.vmf =
        VmfParams(pole, kv.get_double("dgp.marginal.kappa", 0.0));
    cfg.dgp.marginal.alpha = kv.get_double("dgp.marginal.alpha", 1.0);
  } else {
    throw_error(ErrorCode::kConfigParse,
                "config: dgp.marginal must be uniform or vmf_mixture");
  }

  cfg.dgp.generator.d = d;
  cfg.dgp.generator.n_layers =
      static_cast<int>(kv.get_long("dgp.generator.layers", 3));
  cfg.dgp.generator.leaky_slope = kv.get_double("dgp.generator.slope", 0.2);
  cfg.dgp.generator.max_condition_number =
      kv.get_double("dgp.generator.max_cond", 25.0);
  // 0 derives the generator seed from the run seed so paired-seed
  // experiments vary the generator as well.
  const std::uint64_t gen_seed = kv.get_u64("dgp.generator.seed", 0);
  cfg.dgp.generator.seed =
      gen_seed != 0 ? gen_seed : cfg.seed * 0x9e3779b97f4a7c15ULL + 0x67656eULL;

  cfg.encoder_layers = static_cast<int>(kv.get_long("encoder.layers", 6));
  cfg.encoder_width = static_cast<int>(kv.get_long("encoder.width", 0));
  cfg.encoder_slope = kv.get_double("encoder.slope", 0.2);
  cfg.encoder_normalize = kv.get_bool("encoder.normalize", true);

  const std::string kind = kv.get_string("loss.kind", "aninfonce");
  if (kind == "infonce") {
    cfg.loss_kind = LossKind::kInfoNce;
  } else if (kind == "aninfonce") {
    cfg.loss_kind = LossKind::kAnInfoNce;
  } else if (kind == "ensemble") {
    cfg.loss_kind = LossKind::kEnsemble;
  } else {
    throw_error(ErrorCode::kConfigParse,
                "config: loss.kind must be infonce, aninfonce or ensemble");
  }
  cfg.tau = kv.get_double("loss.tau", 1.0);
  const std::string negs = kv.get_string("loss.negatives", "in-batch");
  if (negs == "in-batch") {
    cfg.negatives = kInBatchNegatives;
  } else {
    try {
      cfg.negatives = std::stoi(negs);
    } catch (const std::exception&) {
      throw_error(ErrorCode::kConfigParse,
                  "config: loss.negatives must be 'in-batch' or a count");
    }
  }
  cfg.hard_negatives =
      static_cast<int>(kv.get_long("loss.hard_negatives", 0));

  if (kind == "ensemble" || kv.has("ensemble.lambda2")) {
    require(kv.has("ensemble.lambda2"), ErrorCode::kConfigParse,
            "config: ensemble loss needs ensemble.lambda2");
    cfg.ensemble_lambda2 = ConcentrationMatrix(expand_lambda_list(
        kv.get_double_list("ensemble.lambda2", {}), d, "ensemble.lambda2"));
  } else {
    kv.mark_consumed("ensemble.lambda2");
  }
  const std::string update = kv.get_string("ensemble.update", "summed");
  if (update == "summed") {
    cfg.ensemble_update = EnsembleUpdate::kSummed;
  } else if (update == "alternating") {
    cfg.ensemble_update = EnsembleUpdate::kAlternating;
  } else {
    throw_error(ErrorCode::kConfigParse,
                "config: ensemble.update must be summed or alternating");
  }

  cfg.steps = kv.get_long("train.steps", 10000);
  cfg.batch_size = static_cast<int>(kv.get_long("train.batch_size", 512));
  cfg.eval_every = kv.get_long("train.eval_every", 500);
  cfg.eval_batch = static_cast<int>(kv.get_long("train.eval_batch", 2048));
  cfg.final_eval_samples =
      static_cast<int>(kv.get_long("train.final_eval_samples", 10000));

  cfg.adam.lr = kv.get_double("opt.lr", 1e-4);
  cfg.adam.beta1 = kv.get_double("opt.beta1", 0.9);
  cfg.adam.beta2 = kv.get_double("opt.beta2", 0.999);
  cfg.adam.eps = kv.get_double("opt.eps", 1e-8);

  cfg.validate();
  return cfg;
}

}  // namespace anicl
