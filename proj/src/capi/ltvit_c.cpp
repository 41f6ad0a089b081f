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

#include "ltvit/ltvit.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "core/checkpoint.hpp"
#include "core/config.hpp"
#include "core/data.hpp"
#include "core/error.hpp"
#include "core/run.hpp"
#include "core/train.hpp"

struct ltvit_config {
  ltvit::RunConfig rep;
};

struct ltvit_dataset {
  ltvit::Dataset rep;
};

struct ltvit_model {
  ltvit::RunConfig config;
  ltvit::Parameters params;
};

namespace {

thread_local std::string last_error;

ltvit_status status_of(ltvit::ErrorKind kind) {
  using ltvit::ErrorKind;
  switch (kind) {
    case ErrorKind::kDimension: return LTVIT_DIMENSION;
    case ErrorKind::kContract: return LTVIT_CONTRACT;
    case ErrorKind::kConfig: return LTVIT_CONFIG;
    case ErrorKind::kNumeric: return LTVIT_NUMERIC;
    case ErrorKind::kIo: return LTVIT_IO;
    case ErrorKind::kBadMagic: return LTVIT_FORMAT_MAGIC;
    case ErrorKind::kBadVersion: return LTVIT_FORMAT_VERSION;
    case ErrorKind::kTruncated: return LTVIT_FORMAT_TRUNCATED;
    case ErrorKind::kFormat: return LTVIT_FORMAT;
  }
  return LTVIT_INTERNAL;
}

template <typename Fn>
ltvit_status guarded(Fn&& fn) {
  try {
    fn();
    last_error.clear();
    return LTVIT_OK;
  } catch (const ltvit::Error& e) {
    last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return LTVIT_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return LTVIT_INTERNAL;
  }
}

ltvit_status usage(const char* what) {
  last_error = what;
  return LTVIT_USAGE;
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

ltvit::LogSink sink(ltvit_log_fn log, void* user) {
  if (!log) return {};
  return [log, user](std::string_view line) { log(std::string(line).c_str(), user); };
}

}  // namespace

extern "C" {

const char* ltvit_last_error(void) { return last_error.c_str(); }

const char* ltvit_status_name(ltvit_status status) {
  switch (status) {
    case LTVIT_OK: return "ok";
    case LTVIT_USAGE: return "usage";
    case LTVIT_CONFIG: return "config";
    case LTVIT_DIMENSION: return "dimension";
    case LTVIT_CONTRACT: return "contract";
    case LTVIT_NUMERIC: return "numeric";
    case LTVIT_IO: return "io";
    case LTVIT_FORMAT_MAGIC: return "bad magic";
    case LTVIT_FORMAT_VERSION: return "bad version";
    case LTVIT_FORMAT_TRUNCATED: return "truncated";
    case LTVIT_FORMAT: return "format";
    case LTVIT_INTERNAL: return "internal";
  }
  return "unknown";
}

void ltvit_string_free(char* s) { std::free(s); }

ltvit_status ltvit_config_default(ltvit_config** out) {
  if (!out) return usage("ltvit_config_default: out is NULL");
  return guarded([&] { *out = new ltvit_config{}; });
}

ltvit_status ltvit_config_parse(const char* text, ltvit_config** out) {
  if (!text || !out) return usage("ltvit_config_parse: NULL argument");
  return guarded([&] { *out = new ltvit_config{ltvit::parse_run_config(text)}; });
}

ltvit_status ltvit_config_load(const char* path, ltvit_config** out) {
  if (!path || !out) return usage("ltvit_config_load: NULL argument");
  return guarded([&] { *out = new ltvit_config{ltvit::load_run_config(path)}; });
}

ltvit_status ltvit_config_set(ltvit_config* config, const char* key, const char* value) {
  if (!config || !key || !value) return usage("ltvit_config_set: NULL argument");
  return guarded([&] { ltvit::set_config_value(config->rep, key, value); });
}

ltvit_status ltvit_config_get(const ltvit_config* config, const char* key, char** out) {
  if (!config || !key || !out) return usage("ltvit_config_get: NULL argument");
  return guarded([&] { *out = copy_string(ltvit::get_config_value(config->rep, key)); });
}

ltvit_status ltvit_config_to_string(const ltvit_config* config, char** out) {
  if (!config || !out) return usage("ltvit_config_to_string: NULL argument");
  return guarded([&] { *out = copy_string(ltvit::serialize_run_config(config->rep)); });
}

void ltvit_config_free(ltvit_config* config) { delete config; }

ltvit_status ltvit_dataset_generate(size_t count, uint64_t seed, size_t labels, size_t size,
                                    double noise, ltvit_dataset** out) {
  if (!out) return usage("ltvit_dataset_generate: out is NULL");
  return guarded([&] {
    ltvit::SyntheticConfig cfg;
    cfg.height = cfg.width = size;
    cfg.labels = labels;
    cfg.noise_std = noise;
    *out = new ltvit_dataset{ltvit::generate_synthetic(count, seed, cfg)};
  });
}

ltvit_status ltvit_dataset_load(const char* path, ltvit_dataset** out) {
  if (!path || !out) return usage("ltvit_dataset_load: NULL argument");
  return guarded([&] { *out = new ltvit_dataset{ltvit::read_dataset(path)}; });
}

ltvit_status ltvit_dataset_save(const ltvit_dataset* ds, const char* path) {
  if (!ds || !path) return usage("ltvit_dataset_save: NULL argument");
  return guarded([&] { ltvit::write_dataset(ds->rep, path); });
}

size_t ltvit_dataset_count(const ltvit_dataset* ds) { return ds ? ds->rep.size() : 0; }

void ltvit_dataset_free(ltvit_dataset* ds) { delete ds; }

ltvit_status ltvit_model_create(const ltvit_config* config, ltvit_model** out) {
  if (!config || !out) return usage("ltvit_model_create: NULL argument");
  return guarded([&] {
    *out = new ltvit_model{config->rep,
                           ltvit::init_parameters(config->rep.model, config->rep.schedule.seed)};
  });
}

ltvit_status ltvit_model_load(const char* path, ltvit_model** out) {
  if (!path || !out) return usage("ltvit_model_load: NULL argument");
  return guarded([&] {
    const ltvit::Checkpoint ckpt = ltvit::load_checkpoint(path);
    *out = new ltvit_model{ckpt.config,
                           ltvit::parameters_from_checkpoint(ckpt, ckpt.config.model)};
  });
}

ltvit_status ltvit_model_save(const ltvit_model* model, const char* path) {
  if (!model || !path) return usage("ltvit_model_save: NULL argument");
  return guarded(
      [&] { ltvit::save_checkpoint(ltvit::make_checkpoint(model->config, model->params), path); });
}

size_t ltvit_model_parameter_count(const ltvit_model* model) {
  return model ? model->params.count() : 0;
}

size_t ltvit_model_labels(const ltvit_model* model) {
  return model ? model->config.model.labels : 0;
}

ltvit_status ltvit_model_predict(const ltvit_model* model, const ltvit_dataset* ds,
                                 size_t sample, double* logits, size_t capacity) {
  if (!model || !ds || !logits) return usage("ltvit_model_predict: NULL argument");
  return guarded([&] {
    const auto& cfg = model->config.model;
    ltvit::check_dataset_fits(cfg, ds->rep);
    ltvit::require(sample < ds->rep.size(), ltvit::ErrorKind::kContract,
                   "sample " + std::to_string(sample) + " out of range");
    ltvit::require(capacity >= cfg.labels, ltvit::ErrorKind::kContract,
                   "logit buffer holds " + std::to_string(capacity) + " values, need " +
                       std::to_string(cfg.labels));
    ltvit::Tape tape;
    auto bound = ltvit::bind_parameters_view(tape, model->params, cfg.heads);
    const auto r = ltvit::forward(tape, bound, ds->rep.image(sample), cfg);
    const auto v = r.logits.value();
    std::copy(v.begin(), v.end(), logits);
  });
}

ltvit_status ltvit_model_evaluate(const ltvit_model* model, const ltvit_dataset* ds,
                                  char** json_out) {
  if (!model || !ds || !json_out) return usage("ltvit_model_evaluate: NULL argument");
  return guarded([&] {
    const auto report = ltvit::evaluate(model->config.model, model->params, ds->rep,
                                        model->config.schedule.threads);
    *json_out = copy_string(ltvit::to_json(report));
  });
}

void ltvit_model_free(ltvit_model* model) { delete model; }

ltvit_status ltvit_train(const ltvit_config* config, const ltvit_dataset* train,
                         const ltvit_dataset* val, const char* out_dir, ltvit_log_fn log,
                         void* user) {
  if (!config || !train || !out_dir) return usage("ltvit_train: NULL argument");
  return guarded([&] {
    ltvit::run_training(config->rep, train->rep, val ? &val->rep : nullptr, out_dir,
                        sink(log, user));
  });
}

ltvit_status ltvit_ablate(const ltvit_config* config, const ltvit_dataset* train,
                          const ltvit_dataset* val, const char* modes, const char* out_dir,
                          ltvit_log_fn log, void* user, char** table_out) {
  if (!config || !train || !modes || !out_dir) return usage("ltvit_ablate: NULL argument");
  return guarded([&] {
    const auto list = ltvit::parse_mode_list(modes);
    const auto rows = ltvit::run_ablation(config->rep, train->rep, val ? &val->rep : nullptr,
                                          list, out_dir, sink(log, user));
    if (table_out) *table_out = copy_string(ltvit::format_ablation_table(rows));
  });
}

ltvit_status ltvit_attnmap(const char* checkpoint, const ltvit_dataset* ds, size_t sample,
                           int64_t label, int64_t blur_radius, const char* reduce,
                           const char* out_dir, char** masses_out) {
  if (!checkpoint || !ds || !out_dir) return usage("ltvit_attnmap: NULL argument");
  return guarded([&] {
    ltvit::AttnmapRequest req;
    req.sample = sample;
    if (label >= 0) req.label = static_cast<std::size_t>(label);
    if (blur_radius >= 0) req.blur_radius = static_cast<std::size_t>(blur_radius);
    if (reduce) {
      const auto r = ltvit::parse_reduce(reduce);
      if (!r)
        ltvit::fail(ltvit::ErrorKind::kConfig,
                    "reduce must be 'mean' or 'last', got '" + std::string(reduce) + "'");
      req.reduce = *r;
    }
    const std::string side =
        ltvit::run_attnmap(ltvit::load_checkpoint(checkpoint), ds->rep, req, out_dir);
    if (masses_out) *masses_out = copy_string(side);
  });
}

}  // extern "C"
