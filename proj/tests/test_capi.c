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

/* Exercises the shared library through its C header only. */

#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "mognet.h"

static int failures = 0;

#define EXPECT(cond)                                                     \
  do {                                                                   \
    if (!(cond)) {                                                       \
      fprintf(stderr, "%s:%d: expectation failed: %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                        \
    }                                                                    \
  } while (0)

static void write_file(const char* path, const char* text) {
  FILE* f = fopen(path, "w");
  if (f == NULL) {
    perror(path);
    exit(1);
  }
  fputs(text, f);
  fclose(f);
}

static int epochs_seen = 0;

static void count_epoch(const char* line, void* user) {
  (void)user;
  if (strncmp(line, "stage=", 6) == 0) ++epochs_seen;
}

int main(int argc, char** argv) {
  const char* dir = argc > 1 ? argv[1] : ".";
  char cfg_path[1024], bad_path[1024], out_dir[1024], ckpt[1024], copy[1024];
  snprintf(cfg_path, sizeof cfg_path, "%s/capi_tiny.cfg", dir);
  snprintf(bad_path, sizeof bad_path, "%s/capi_bad.cfg", dir);
  snprintf(out_dir, sizeof out_dir, "%s/capi_run", dir);
  snprintf(ckpt, sizeof ckpt, "%s/capi_run/model.ckpt", dir);
  snprintf(copy, sizeof copy, "%s/capi_copy.ckpt", dir);

  EXPECT(strlen(mognet_version()) > 0);

  /* gen-ca */
  char* text = NULL;
  EXPECT(mognet_gen_ca(30, 5, 2, "00100", &text) == MOGNET_OK);
  EXPECT(text != NULL && strcmp(text, "01110\n11001\n") == 0);
  mognet_string_free(text);
  text = NULL;
  EXPECT(mognet_gen_ca(30, 2, 2, "1", &text) == MOGNET_ERR_CONFIG);
  EXPECT(strstr(mognet_last_error(), "width") != NULL);
  EXPECT(mognet_gen_ca(30, 8, 3, "12", &text) == MOGNET_OK);
  mognet_string_free(text);

  /* config errors */
  write_file(bad_path, "k = 0\n");
  mognet_model* model = NULL;
  EXPECT(mognet_model_create(bad_path, &model) == MOGNET_ERR_CONFIG);
  EXPECT(strstr(mognet_last_error(), "k") != NULL);
  EXPECT(mognet_model_create("/nonexistent/x.cfg", &model) == MOGNET_ERR_DATA);
  EXPECT(mognet_model_load("/nonexistent/x.ckpt", &model) == MOGNET_ERR_DATA);

  /* size report of the default network */
  write_file(cfg_path, "# defaults\n");
  EXPECT(mognet_model_create(cfg_path, &model) == MOGNET_OK);
  EXPECT(mognet_size_report(model, 1, &text) == MOGNET_OK);
  EXPECT(strstr(text, "cr=17/144") != NULL);
  mognet_string_free(text);
  mognet_model_free(model);
  model = NULL;

  /* train, save, reload, evaluate, infer */
  write_file(cfg_path,
             "n = 16\ngroups = 2\nk = 2\nstages = 2\nclass_count = 2\nimage_size = 8\n"
             "epochs_stage1 = 1\nepochs_stage2 = 1\nsynth_samples = 100\nbatch_size = 25\n");
  EXPECT(mognet_train(cfg_path, "synth", out_dir, count_epoch, NULL) == MOGNET_OK);
  EXPECT(epochs_seen == 2);
  EXPECT(mognet_model_load(ckpt, &model) == MOGNET_OK);
  mognet_model_info info;
  EXPECT(mognet_model_info_get(model, &info) == MOGNET_OK);
  EXPECT(info.n == 16 && info.k == 2 && info.class_count == 2 && info.image_size == 8);
  EXPECT(mognet_model_save(model, copy) == MOGNET_OK);

  mognet_eval_result r;
  EXPECT(mognet_eval(model, "synth", 50, MOGNET_ENGINE_BOTH, &r) == MOGNET_OK);
  EXPECT(r.samples == 50);
  EXPECT(r.disagreements == 0);
  EXPECT(r.first_divergent == -1);
  EXPECT(r.correct_real == r.correct_integer);
  EXPECT(mognet_eval(model, "/nonexistent", 0, MOGNET_ENGINE_REAL, &r) == MOGNET_ERR_DATA);

  unsigned char pixels[3 * 8 * 8];
  memset(pixels, 0, sizeof pixels);
  int64_t scores[2];
  int label = -1;
  EXPECT(mognet_infer(model, pixels, sizeof pixels, scores, 2, &label) == MOGNET_OK);
  EXPECT(label == 0 || label == 1);
  EXPECT(label == (scores[1] > scores[0] ? 1 : 0));
  EXPECT(mognet_infer(model, pixels, 10, scores, 2, &label) == MOGNET_ERR_DATA);
  EXPECT(mognet_infer(model, pixels, sizeof pixels, scores, 1, &label) == MOGNET_ERR_CONFIG);
  mognet_model_free(model);

  EXPECT(mognet_model_load(NULL, &model) == MOGNET_ERR_CONFIG);

  if (failures == 0) printf("capi: all expectations met\n");
  return failures == 0 ? 0 : 1;
}
