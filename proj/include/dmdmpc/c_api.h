/* Copyright 2026 The DMD-MPC Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface to the experiment harness. Handles are opaque; every call
 * returns a status and, on failure, leaves a message retrievable with
 * dmd_last_error() on the calling thread. */

#ifndef DMDMPC_C_API_H_
#define DMDMPC_C_API_H_

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dmd_status {
  DMD_OK = 0,
  DMD_INVALID_ARGUMENT = 1,
  DMD_SHAPE_MISMATCH = 2,
  DMD_NOT_POSITIVE_DEFINITE = 3,
  DMD_DEGENERATE_ESTIMATE = 4,
  DMD_INFEASIBLE_STEP = 5,
  DMD_UNSUPPORTED = 6,
  DMD_PARSE_ERROR = 7,
  DMD_IO_ERROR = 8,
  DMD_INTERNAL_ERROR = 99,
} dmd_status;

typedef struct dmd_config dmd_config;
typedef struct dmd_episode dmd_episode;

/* Message of the last failed call on this thread ("" if none). */
const char* dmd_last_error(void);

/* Default configuration (continuous cartpole). */
dmd_status dmd_config_create(dmd_config** out);
/* Applies an INI file on top of the current values. */
dmd_status dmd_config_load_file(dmd_config* config, const char* path);
/* key is "section.name", e.g. "controller.gamma". */
dmd_status dmd_config_set(dmd_config* config, const char* key,
                          const char* value);
dmd_status dmd_config_validate(const dmd_config* config);
/* Writes the resolved config as INI text. If buffer is too small (or NULL),
 * *required holds the size including the terminating NUL. */
dmd_status dmd_config_dump(const dmd_config* config, char* buffer,
                           size_t capacity, size_t* required);
dmd_status dmd_config_hash(const dmd_config* config, uint64_t* out);
/* Seed of episode `episode` in sweep cell `cell`. */
dmd_status dmd_config_episode_seed(const dmd_config* config, int cell,
                                   int episode, uint64_t* out);
void dmd_config_destroy(dmd_config* config);

dmd_status dmd_episode_run(const dmd_config* config, uint64_t seed,
                           dmd_episode** out);
dmd_status dmd_episode_length(const dmd_episode* episode, int* out);
dmd_status dmd_episode_cost(const dmd_episode* episode, double* out);
dmd_status dmd_episode_success(const dmd_episode* episode, int* out);
/* Per-step values of round t. state and control may be NULL; otherwise they
 * must hold state_dim and control_dim doubles. */
dmd_status dmd_episode_dims(const dmd_episode* episode, int* state_dim,
                            int* control_dim);
dmd_status dmd_episode_step(const dmd_episode* episode, int t, double* state,
                            double* control, double* cost,
                            double* loss_estimate,
                            double* effective_sample_size,
                            double* planned_loss);
/* Per-step trace CSV. */
dmd_status dmd_episode_write_csv(const dmd_episode* episode, const char* path);
/* One summary row in the sweep CSV schema. */
dmd_status dmd_episode_write_summary_csv(const dmd_episode* episode,
                                         const char* path);
void dmd_episode_destroy(dmd_episode* episode);

/* Runs the configured sweep and writes the CSV. Failed episodes become rows
 * with failed=1; *failed_rows (may be NULL) receives their count. */
dmd_status dmd_sweep_run(const dmd_config* config, const char* csv_path,
                         int* failed_rows);

#ifdef __cplusplus
}
#endif

#endif /* DMDMPC_C_API_H_ */
