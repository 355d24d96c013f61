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

#include "anicl/anicl.h"

#include <cstring>
#include <memory>
#include <string>

#include "core/config.hpp"
#include "core/harness.hpp"

using anicl::Error;
using anicl::ErrorCode;
using anicl::KvConfig;

struct anicl_config {
  KvConfig kv;
};

namespace {

thread_local std::string g_last_error;

anicl_status status_from(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return ANICL_ERROR_INVALID_ARGUMENT;
    case ErrorCode::kDegenerateInput: return ANICL_ERROR_DEGENERATE_INPUT;
    case ErrorCode::kEnvelopeTooLoose: return ANICL_ERROR_ENVELOPE_TOO_LOOSE;
    case ErrorCode::kConstructionFailed: return ANICL_ERROR_CONSTRUCTION_FAILED;
    case ErrorCode::kSingularLayer: return ANICL_ERROR_SINGULAR_LAYER;
    case ErrorCode::kNumericOverflow: return ANICL_ERROR_NUMERIC_OVERFLOW;
    case ErrorCode::kMissingGradient: return ANICL_ERROR_MISSING_GRADIENT;
    case ErrorCode::kInsufficientData: return ANICL_ERROR_INSUFFICIENT_DATA;
    case ErrorCode::kConfigParse: return ANICL_ERROR_CONFIG_PARSE;
    case ErrorCode::kIo: return ANICL_ERROR_IO;
    case ErrorCode::kInternal: return ANICL_ERROR_INTERNAL;
  }
  return ANICL_ERROR_INTERNAL;
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <typename Fn>
anicl_status guarded(Fn&& fn) {
  try {
    fn();
    return ANICL_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_from(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return ANICL_ERROR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return ANICL_ERROR_INTERNAL;
  }
}

template <typename Fn>
anicl_status run_verb(const anicl_config* cfg, char** out_json, Fn&& fn) {
  if (cfg == nullptr) {
    g_last_error = "null config";
    return ANICL_ERROR_INVALID_ARGUMENT;
  }
  return guarded([&] {
    const std::string json = fn(cfg->kv);
    if (out_json != nullptr) *out_json = dup_string(json);
  });
}

}  // namespace

extern "C" {

const char* anicl_version(void) { return "0.1.0"; }

const char* anicl_last_error(void) { return g_last_error.c_str(); }

anicl_status anicl_config_create(anicl_config** out) {
  if (out == nullptr) {
    g_last_error = "null output pointer";
    return ANICL_ERROR_INVALID_ARGUMENT;
  }
  return guarded([&] { *out = new anicl_config(); });
}

anicl_status anicl_config_load(const char* path, anicl_config** out) {
  if (path == nullptr || out == nullptr) {
    g_last_error = "null argument";
    return ANICL_ERROR_INVALID_ARGUMENT;
  }
  return guarded([&] {
    auto cfg = std::make_unique<anicl_config>();
    cfg->kv = KvConfig::from_file(path);
    *out = cfg.release();
  });
}

anicl_status anicl_config_set(anicl_config* cfg, const char* key,
                              const char* value) {
  if (cfg == nullptr || key == nullptr || value == nullptr) {
    g_last_error = "null argument";
    return ANICL_ERROR_INVALID_ARGUMENT;
  }
  return guarded([&] { cfg->kv.set(key, value); });
}

anicl_status anicl_config_dump(const anicl_config* cfg, char** out_text) {
  if (cfg == nullptr || out_text == nullptr) {
    g_last_error = "null argument";
    return ANICL_ERROR_INVALID_ARGUMENT;
  }
  return guarded([&] { *out_text = dup_string(cfg->kv.to_string()); });
}

void anicl_config_free(anicl_config* cfg) { delete cfg; }

void anicl_string_free(char* s) { delete[] s; }

anicl_status anicl_run(const anicl_config* cfg, char** out_json) {
  return run_verb(cfg, out_json, anicl::harness_run);
}

anicl_status anicl_sweep(const anicl_config* cfg, char** out_json) {
  return run_verb(cfg, out_json, anicl::harness_sweep);
}

anicl_status anicl_hn_scan(const anicl_config* cfg, char** out_json) {
  return run_verb(cfg, out_json, anicl::harness_hn_scan);
}

anicl_status anicl_hn_finetune(const anicl_config* cfg, char** out_json) {
  return run_verb(cfg, out_json, anicl::harness_hn_finetune);
}

anicl_status anicl_ensemble(const anicl_config* cfg, char** out_json) {
  return run_verb(cfg, out_json, anicl::harness_ensemble);
}

anicl_status anicl_marginal_shift(const anicl_config* cfg, char** out_json) {
  return run_verb(cfg, out_json, anicl::harness_marginal_shift);
}

anicl_status anicl_eval(const anicl_config* cfg, const char* checkpoint_path,
                        char** out_json) {
  if (checkpoint_path == nullptr) {
    g_last_error = "null checkpoint path";
    return ANICL_ERROR_INVALID_ARGUMENT;
  }
  const std::string path = checkpoint_path;
  return run_verb(cfg, out_json, [&path](const KvConfig& kv) {
    return anicl::harness_eval(kv, path);
  });
}

anicl_status anicl_oracle(const anicl_config* cfg, char** out_json) {
  return run_verb(cfg, out_json, anicl::harness_oracle);
}

}  // extern "C"
