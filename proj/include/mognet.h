/* Copyright 2026 The MOGNET Authors. All Rights Reserved.
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

/* C interface to the MOGNET toolkit.
 *
 * Every function returns a mognet_status. On failure the message is
 * available from mognet_last_error() on the calling thread until the next
 * call into the library. Strings returned through char** out-parameters are
 * owned by the caller and released with mognet_string_free().
 *
 * `data` arguments name a dataset: "synth" for the built-in synthetic set
 * shaped after the model, otherwise a directory holding CIFAR-10 binary
 * batches or a single .bin file.
 */

#ifndef MOGNET_H_
#define MOGNET_H_

#include <stddef.h>
#include <stdint.h>

#if defined(MOGNET_BUILDING_LIBRARY)
#define MOGNET_API __attribute__((visibility("default")))
#else
#define MOGNET_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mognet_status {
  MOGNET_OK = 0,
  MOGNET_ERR_CONFIG = 2,
  MOGNET_ERR_DATA = 3,
  MOGNET_ERR_INTERNAL = 4
} mognet_status;

typedef enum mognet_engine {
  MOGNET_ENGINE_REAL = 1,
  MOGNET_ENGINE_INTEGER = 2,
  MOGNET_ENGINE_BOTH = 3
} mognet_engine;

typedef struct mognet_model mognet_model;

typedef struct mognet_model_info {
  int n;
  int groups;
  int k;
  int stages;
  int blocks_per_stage;
  int class_count;
  int in_channels;
  int image_size;
} mognet_model_info;

typedef struct mognet_eval_result {
  size_t samples;
  size_t correct_real;     /* valid when the real engine ran */
  size_t correct_integer;  /* valid when the integer engine ran */
  size_t disagreements;    /* MOGNET_ENGINE_BOTH only */
  int64_t first_divergent; /* sample index, or -1 */
} mognet_eval_result;

/* Receives one metrics line per finished epoch. */
typedef void (*mognet_epoch_fn)(const char* line, void* user);

MOGNET_API const char* mognet_version(void);
MOGNET_API const char* mognet_last_error(void);
MOGNET_API void mognet_string_free(char* s);

/* Untrained model built from a config file. */
MOGNET_API mognet_status mognet_model_create(const char* config_path, mognet_model** out);
MOGNET_API mognet_status mognet_model_load(const char* checkpoint_path, mognet_model** out);
MOGNET_API mognet_status mognet_model_save(const mognet_model* model, const char* path);
MOGNET_API void mognet_model_free(mognet_model* model);
MOGNET_API mognet_status mognet_model_info_get(const mognet_model* model, mognet_model_info* out);

/* Two-stage training. Writes out_dir/model.ckpt, out_dir/metrics.log and
 * out_dir/manifest; the manifest is a config file that reproduces the run.
 * `data` may be NULL to use the config's `data` key. */
MOGNET_API mognet_status mognet_train(const char* config_path, const char* data,
                                      const char* out_dir, mognet_epoch_fn on_epoch, void* user);

/* Top-1 evaluation on the test split (or the synthetic set). max_samples 0
 * evaluates everything. With MOGNET_ENGINE_BOTH, any prediction mismatch
 * between the engines returns MOGNET_ERR_INTERNAL with `out` filled in. */
MOGNET_API mognet_status mognet_eval(const mognet_model* model, const char* data,
                                     size_t max_samples, mognet_engine engine,
                                     mognet_eval_result* out);

/* Integer-engine inference on one CHW 8-bit image. scores receives
 * class_count fixed-point values (logit * 2^16 * h * w). */
MOGNET_API mognet_status mognet_infer(const mognet_model* model, const uint8_t* pixels,
                                      size_t pixel_count, int64_t* scores, size_t score_capacity,
                                      int* label);

/* Size table of a model or config. machine != 0 selects key=value lines. */
MOGNET_API mognet_status mognet_size_report(const mognet_model* model, int machine, char** out);

/* CA state matrix, one line of 0/1 per update. `seed` is either a 0/1
 * string of length `width` used as the seed row, or a decimal integer
 * seeding the balanced default row. */
MOGNET_API mognet_status mognet_gen_ca(int rule, int width, int steps, const char* seed,
                                       char** out);

#ifdef __cplusplus
}
#endif

#endif /* MOGNET_H_ */
