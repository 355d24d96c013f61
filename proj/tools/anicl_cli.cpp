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

// Experiment runner over the shared-library C interface. Every verb takes
// the same config surface: --config file, then --seed/--out, then repeated
// --set key=value overrides (applied in that order).

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "anicl/anicl.h"

namespace {

struct ConfigDeleter {
  void operator()(anicl_config* c) const { anicl_config_free(c); }
};
using ConfigPtr = std::unique_ptr<anicl_config, ConfigDeleter>;

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::string seed;
  std::vector<std::string> sets;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "Config file (key = value)");
  cmd->add_option("--out", args.out_dir, "Output directory");
  cmd->add_option("--seed", args.seed, "Run seed (unsigned 64-bit)");
  cmd->add_option("--set", args.sets,
                  "Override a config key, e.g. --set train.steps=1000")
      ->take_all();
  cmd->add_flag("-q,--quiet", args.quiet, "Suppress the JSON summary");
}

int fail(const std::string& stage) {
  std::fprintf(stderr, "anicl: %s: %s\n", stage.c_str(), anicl_last_error());
  return 1;
}

ConfigPtr build_config(const CommonArgs& args, int& rc) {
  anicl_config* raw = nullptr;
  rc = 0;
  if (!args.config_path.empty()) {
    if (anicl_config_load(args.config_path.c_str(), &raw) != ANICL_OK) {
      rc = fail("loading config");
      return nullptr;
    }
  } else if (anicl_config_create(&raw) != ANICL_OK) {
    rc = fail("creating config");
    return nullptr;
  }
  ConfigPtr cfg(raw);
  if (!args.seed.empty() &&
      anicl_config_set(cfg.get(), "seed", args.seed.c_str()) != ANICL_OK) {
    rc = fail("setting seed");
    return nullptr;
  }
  if (!args.out_dir.empty() &&
      anicl_config_set(cfg.get(), "out", args.out_dir.c_str()) != ANICL_OK) {
    rc = fail("setting output directory");
    return nullptr;
  }
  for (const auto& kv : args.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "anicl: --set expects key=value, got '%s'\n",
                   kv.c_str());
      rc = 1;
      return nullptr;
    }
    const std::string key = kv.substr(0, eq);
    const std::string value = kv.substr(eq + 1);
    if (anicl_config_set(cfg.get(), key.c_str(), value.c_str()) != ANICL_OK) {
      rc = fail("applying --set " + kv);
      return nullptr;
    }
  }
  return cfg;
}

using VerbFn = anicl_status (*)(const anicl_config*, char**);

int run_verb(const CommonArgs& args, VerbFn fn, const char* name) {
  int rc = 0;
  ConfigPtr cfg = build_config(args, rc);
  if (!cfg) return rc;
  char* json = nullptr;
  if (fn(cfg.get(), &json) != ANICL_OK) return fail(name);
  if (!args.quiet && json != nullptr) std::printf("%s\n", json);
  anicl_string_free(json);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"anisotropic contrastive learning on synthetic hypersphere "
               "processes"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(anicl_version()));

  struct Verb {
    const char* name;
    const char* help;
    VerbFn fn;
  };
  const std::vector<Verb> verbs = {
      {"run", "Train one encoder and write metrics/report/checkpoint",
       anicl_run},
      {"sweep", "Run a grid of training cells (sweep.kind selects the axes)",
       anicl_sweep},
      {"hn-scan", "Loss-vs-gamma scan on hard-negative batches",
       anicl_hn_scan},
      {"hn-finetune",
       "Pretrain, then compare continued training vs hard-negative finetuning",
       anicl_hn_finetune},
      {"ensemble", "Compare InfoNCE / AnInfoNCE / ensemble on two processes",
       anicl_ensemble},
      {"marginal-shift",
       "Train/test marginal mismatch sweep over shift.kappas",
       anicl_marginal_shift},
      {"oracle", "Monte-Carlo minimal-loss estimate for the configured process",
       anicl_oracle},
  };

  std::vector<CommonArgs> verb_args(verbs.size());
  for (std::size_t i = 0; i < verbs.size(); ++i) {
    CLI::App* cmd = app.add_subcommand(verbs[i].name, verbs[i].help);
    add_common(cmd, verb_args[i]);
  }

  CommonArgs eval_args;
  std::string eval_checkpoint;
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "Re-evaluate a checkpoint on fresh data");
  add_common(eval_cmd, eval_args);
  eval_cmd->add_option("checkpoint", eval_checkpoint, "checkpoint.bin path")
      ->required();

  CLI11_PARSE(app, argc, argv);

  for (std::size_t i = 0; i < verbs.size(); ++i) {
    if (app.get_subcommand(verbs[i].name)->parsed()) {
      return run_verb(verb_args[i], verbs[i].fn, verbs[i].name);
    }
  }
  if (eval_cmd->parsed()) {
    int rc = 0;
    ConfigPtr cfg = build_config(eval_args, rc);
    if (!cfg) return rc;
    char* json = nullptr;
    if (anicl_eval(cfg.get(), eval_checkpoint.c_str(), &json) != ANICL_OK) {
      return fail("eval");
    }
    if (!eval_args.quiet && json != nullptr) std::printf("%s\n", json);
    anicl_string_free(json);
    return 0;
  }
  return 1;
}
