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

/* Exercises the public C interface from C. */

#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include <ltvit/ltvit.h>

static int failures = 0;

#define EXPECT(cond)                                               \
  do {                                                             \
    if (!(cond)) {                                                 \
      fprintf(stderr, "%s:%d: expected %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                  \
    }                                                              \
  } while (0)

static void count_log(const char* line, void* user) {
  (void)line;
  ++*(int*)user;
}

static char* join(const char* dir, const char* name) {
  char* out = malloc(strlen(dir) + strlen(name) + 2);
  sprintf(out, "%s/%s", dir, name);
  return out;
}

int main(int argc, char** argv) {
  const char* dir = argc > 1 ? argv[1] : "ltvit_capi_out";
  ltvit_config* cfg = NULL;
  ltvit_dataset* ds = NULL;
  ltvit_model* model = NULL;
  char* text = NULL;

  EXPECT(strcmp(ltvit_status_name(LTVIT_OK), "ok") == 0);
  EXPECT(ltvit_config_default(NULL) == LTVIT_USAGE);
  EXPECT(strlen(ltvit_last_error()) > 0);

  EXPECT(ltvit_config_parse("dim = 16\nheads = 2\ndepth = 2\nn1 = 1\nn2 = 1\npatch = 4\n"
                            "image_height = 16\nimage_width = 16\nepochs = 1\nbatch_size = 8\n",
                            &cfg) == LTVIT_OK);
  EXPECT(ltvit_config_set(cfg, "nonsense", "1") == LTVIT_CONFIG);
  EXPECT(strstr(ltvit_last_error(), "nonsense") != NULL);
  EXPECT(ltvit_config_set(cfg, "val_split", "0.25") == LTVIT_OK);
  EXPECT(ltvit_config_get(cfg, "dim", &text) == LTVIT_OK);
  EXPECT(text && strcmp(text, "16") == 0);
  ltvit_string_free(text);
  EXPECT(ltvit_config_to_string(cfg, &text) == LTVIT_OK);
  EXPECT(text && strstr(text, "mode = oneway") != NULL);
  ltvit_string_free(text);

  EXPECT(ltvit_dataset_generate(4, 1, 5, 16, 0.05, &ds) == LTVIT_CONTRACT);
  EXPECT(ltvit_dataset_generate(24, 1, 4, 16, 0.05, &ds) == LTVIT_OK);
  EXPECT(ltvit_dataset_count(ds) == 24);

  char* ds_path = join(dir, "d.ltds");
  ltvit_dataset* back = NULL;
  EXPECT(ltvit_dataset_save(ds, ds_path) == LTVIT_OK);
  EXPECT(ltvit_dataset_load(ds_path, &back) == LTVIT_OK);
  EXPECT(ltvit_dataset_count(back) == 24);
  ltvit_dataset_free(back);
  EXPECT(ltvit_dataset_load("/nonexistent/d.ltds", &back) == LTVIT_IO);

  EXPECT(ltvit_model_create(cfg, &model) == LTVIT_OK);
  EXPECT(ltvit_model_labels(model) == 4);
  EXPECT(ltvit_model_parameter_count(model) > 0);
  double logits[4];
  EXPECT(ltvit_model_predict(model, ds, 0, logits, 2) == LTVIT_CONTRACT);
  EXPECT(ltvit_model_predict(model, ds, 99, logits, 4) == LTVIT_CONTRACT);
  EXPECT(ltvit_model_predict(model, ds, 0, logits, 4) == LTVIT_OK);
  EXPECT(isfinite(logits[0]) && isfinite(logits[3]));
  EXPECT(ltvit_model_evaluate(model, ds, &text) == LTVIT_OK);
  EXPECT(text && strstr(text, "\"macro_auc\"") != NULL);
  ltvit_string_free(text);

  char* ck_path = join(dir, "m.ltck");
  ltvit_model* loaded = NULL;
  EXPECT(ltvit_model_save(model, ck_path) == LTVIT_OK);
  EXPECT(ltvit_model_load(ck_path, &loaded) == LTVIT_OK);
  double again[4];
  EXPECT(ltvit_model_predict(loaded, ds, 0, again, 4) == LTVIT_OK);
  /* Checkpoints store f32, so predictions agree to single precision. */
  EXPECT(fabs(again[1] - logits[1]) < 1e-4);
  ltvit_model_free(loaded);
  EXPECT(ltvit_model_load(ds_path, &loaded) == LTVIT_FORMAT_MAGIC);

  char* run_dir = join(dir, "run");
  int lines = 0;
  EXPECT(ltvit_train(cfg, ds, NULL, run_dir, count_log, &lines) == LTVIT_OK);
  EXPECT(lines >= 1);

  char* best = join(run_dir, "best.ltck");
  char* maps = join(dir, "maps");
  EXPECT(ltvit_attnmap(best, ds, 0, -1, -1, "mean", maps, &text) == LTVIT_OK);
  EXPECT(text && strstr(text, "lbl_3.q3") != NULL);
  ltvit_string_free(text);
  EXPECT(ltvit_attnmap(best, ds, 0, 9, -1, "mean", maps, NULL) == LTVIT_CONTRACT);
  EXPECT(ltvit_attnmap(best, ds, 0, 0, -1, "median", maps, NULL) == LTVIT_CONFIG);

  EXPECT(ltvit_config_set(cfg, "mode", "baseline") == LTVIT_OK);
  EXPECT(ltvit_train(cfg, ds, NULL, run_dir, NULL, NULL) == LTVIT_CONFIG);

  char* abl = join(dir, "abl");
  EXPECT(ltvit_ablate(cfg, ds, NULL, "wrong", abl, NULL, NULL, NULL) == LTVIT_CONFIG);

  free(abl);
  free(maps);
  free(best);
  free(run_dir);
  free(ck_path);
  free(ds_path);
  ltvit_model_free(model);
  ltvit_dataset_free(ds);
  ltvit_config_free(cfg);
  ltvit_config_free(NULL);

  if (failures) fprintf(stderr, "%d C API check(s) failed\n", failures);
  else printf("C API checks passed\n");
  return failures ? 1 : 0;
}
