/*
 * Copyright 2026 The ltvit Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef LTVIT_LTVIT_H_
#define LTVIT_LTVIT_H_

#include <stddef.h>
#include <stdint.h>

#if defined(LTVIT_BUILDING)
#define LTVIT_API __attribute__((visibility("default")))
#else
#define LTVIT_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ltvit_status {
  LTVIT_OK = 0,
  LTVIT_USAGE = 1,
  LTVIT_CONFIG = 2,
  LTVIT_DIMENSION = 3,
  LTVIT_CONTRACT = 4,
  LTVIT_NUMERIC = 5,
  LTVIT_IO = 6,
  LTVIT_FORMAT_MAGIC = 7,
  LTVIT_FORMAT_VERSION = 8,
  LTVIT_FORMAT_TRUNCATED = 9,
  LTVIT_FORMAT = 10,
  LTVIT_INTERNAL = 11
} ltvit_status;

typedef struct ltvit_config ltvit_config;
typedef struct ltvit_dataset ltvit_dataset;
typedef struct ltvit_model ltvit_model;

/* Receives one progress line at a time; the pointer is valid for the call. */
typedef void (*ltvit_log_fn)(const char* line, void* user);

/* Message of the last failed call on this thread, "" if none. */
LTVIT_API const char* ltvit_last_error(void);
LTVIT_API const char* ltvit_status_name(ltvit_status status);
/* Frees strings returned through char** out-parameters. */
LTVIT_API void ltvit_string_free(char* s);

/* Run configuration: flat "key = value" text. */
LTVIT_API ltvit_status ltvit_config_default(ltvit_config** out);
LTVIT_API ltvit_status ltvit_config_parse(const char* text, ltvit_config** out);
LTVIT_API ltvit_status ltvit_config_load(const char* path, ltvit_config** out);
LTVIT_API ltvit_status ltvit_config_set(ltvit_config* config, const char* key, const char* value);
LTVIT_API ltvit_status ltvit_config_get(const ltvit_config* config, const char* key, char** out);
LTVIT_API ltvit_status ltvit_config_to_string(const ltvit_config* config, char** out);
LTVIT_API void ltvit_config_free(ltvit_config* config);

/* Datasets (LTDS files). generate draws the synthetic quadrant task with
   size x size single-channel images. */
LTVIT_API ltvit_status ltvit_dataset_generate(size_t count, uint64_t seed, size_t labels,
                                              size_t size, double noise, ltvit_dataset** out);
LTVIT_API ltvit_status ltvit_dataset_load(const char* path, ltvit_dataset** out);
LTVIT_API ltvit_status ltvit_dataset_save(const ltvit_dataset* ds, const char* path);
LTVIT_API size_t ltvit_dataset_count(const ltvit_dataset* ds);
LTVIT_API void ltvit_dataset_free(ltvit_dataset* ds);

/* Models. create initialises from the config's seed; load reads an LTCK
   checkpoint. */
LTVIT_API ltvit_status ltvit_model_create(const ltvit_config* config, ltvit_model** out);
LTVIT_API ltvit_status ltvit_model_load(const char* path, ltvit_model** out);
LTVIT_API ltvit_status ltvit_model_save(const ltvit_model* model, const char* path);
LTVIT_API size_t ltvit_model_parameter_count(const ltvit_model* model);
LTVIT_API size_t ltvit_model_labels(const ltvit_model* model);
/* Writes the logits of one sample; capacity must be >= ltvit_model_labels. */
LTVIT_API ltvit_status ltvit_model_predict(const ltvit_model* model, const ltvit_dataset* ds,
                                           size_t sample, double* logits, size_t capacity);
/* Single-line JSON evaluation report. */
LTVIT_API ltvit_status ltvit_model_evaluate(const ltvit_model* model, const ltvit_dataset* ds,
                                            char** json_out);
LTVIT_API void ltvit_model_free(ltvit_model* model);

/* Trains into out_dir (config.txt, train.log, best.ltck, last.ltck). val may
   be NULL, in which case the config's val_split applies. The config's init
   key selects a checkpoint to start from. */
LTVIT_API ltvit_status ltvit_train(const ltvit_config* config, const ltvit_dataset* train,
                                   const ltvit_dataset* val, const char* out_dir,
                                   ltvit_log_fn log, void* user);

/* modes: "all" or a comma-separated list of fullself, oneway,
   onewaynolabelself, baseline. table_out may be NULL. */
LTVIT_API ltvit_status ltvit_ablate(const ltvit_config* config, const ltvit_dataset* train,
                                    const ltvit_dataset* val, const char* modes,
                                    const char* out_dir, ltvit_log_fn log, void* user,
                                    char** table_out);

/* label < 0 exports every label; blur_radius < 0 uses patch / 2; reduce is
   "mean" or "last". masses_out may be NULL. */
LTVIT_API ltvit_status ltvit_attnmap(const char* checkpoint, const ltvit_dataset* ds,
                                     size_t sample, int64_t label, int64_t blur_radius,
                                     const char* reduce, const char* out_dir,
                                     char** masses_out);

#ifdef __cplusplus
}
#endif

#endif  // LTVIT_LTVIT_H_
