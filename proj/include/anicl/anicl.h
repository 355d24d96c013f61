/* Copyright 2026 The anicl Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface to the anicl core: anisotropic contrastive learning on
 * synthetic hypersphere processes.
 *
 * Usage pattern: build a config (defaults, file, or key/value overrides),
 * then invoke one of the experiment entry points. Entry points write their
 * artifacts (metrics.csv, report.json / summary.json, checkpoint.bin) under
 * the configured output directory and can return the JSON summary.
 *
 * All functions return ANICL_OK on success; on failure the thread-local
 * message from anicl_last_error() describes the problem. Strings returned
 * through out-parameters are owned by the caller and must be released with
 * anicl_string_free().
 */

#ifndef ANICL_ANICL_H_
#define ANICL_ANICL_H_

#ifdef __cplusplus
extern "C" {
#endif

typedef enum anicl_status {
  ANICL_OK = 0,
  ANICL_ERROR_INVALID_ARGUMENT = 1,
  ANICL_ERROR_DEGENERATE_INPUT = 2,
  ANICL_ERROR_ENVELOPE_TOO_LOOSE = 3,
  ANICL_ERROR_CONSTRUCTION_FAILED = 4,
  ANICL_ERROR_SINGULAR_LAYER = 5,
  ANICL_ERROR_NUMERIC_OVERFLOW = 6,
  ANICL_ERROR_MISSING_GRADIENT = 7,
  ANICL_ERROR_INSUFFICIENT_DATA = 8,
  ANICL_ERROR_CONFIG_PARSE = 9,
  ANICL_ERROR_IO = 10,
  ANICL_ERROR_INTERNAL = 99
} anicl_status;

/* Opaque run configuration (dotted key = value surface). */
typedef struct anicl_config anicl_config;

const char* anicl_version(void);

/* Thread-local message for the most recent failure in this thread. */
const char* anicl_last_error(void);

anicl_status anicl_config_create(anicl_config** out);
anicl_status anicl_config_load(const char* path, anicl_config** out);
anicl_status anicl_config_set(anicl_config* cfg, const char* key,
                              const char* value);
/* Renders the full key = value surface. */
anicl_status anicl_config_dump(const anicl_config* cfg, char** out_text);
void anicl_config_free(anicl_config* cfg);

void anicl_string_free(char* s);

/* Experiment entry points, one per CLI verb. out_json may be NULL when the
 * caller only wants the files. */
anicl_status anicl_run(const anicl_config* cfg, char** out_json);
anicl_status anicl_sweep(const anicl_config* cfg, char** out_json);
anicl_status anicl_hn_scan(const anicl_config* cfg, char** out_json);
anicl_status anicl_hn_finetune(const anicl_config* cfg, char** out_json);
anicl_status anicl_ensemble(const anicl_config* cfg, char** out_json);
anicl_status anicl_marginal_shift(const anicl_config* cfg, char** out_json);
anicl_status anicl_eval(const anicl_config* cfg, const char* checkpoint_path,
                        char** out_json);
anicl_status anicl_oracle(const anicl_config* cfg, char** out_json);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* ANICL_ANICL_H_ */
