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

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>

#include "ltvit/ltvit.h"

namespace {

struct ConfigDeleter {
  void operator()(ltvit_config* c) const { ltvit_config_free(c); }
};
struct DatasetDeleter {
  void operator()(ltvit_dataset* d) const { ltvit_dataset_free(d); }
};
struct ModelDeleter {
  void operator()(ltvit_model* m) const { ltvit_model_free(m); }
};
struct StringDeleter {
  void operator()(char* s) const { ltvit_string_free(s); }
};
using ConfigPtr = std::unique_ptr<ltvit_config, ConfigDeleter>;
using DatasetPtr = std::unique_ptr<ltvit_dataset, DatasetDeleter>;
using ModelPtr = std::unique_ptr<ltvit_model, ModelDeleter>;
using StringPtr = std::unique_ptr<char, StringDeleter>;

// Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.
struct Failure {
  int code;
};

void check(ltvit_status s) {
  if (s == LTVIT_OK) return;
  std::fprintf(stderr, "ltvit: %s error: %s\n", ltvit_status_name(s), ltvit_last_error());
  throw Failure{s == LTVIT_USAGE || s == LTVIT_CONFIG ? 1 : 2};
}

void print_line(const char* line, void*) {
  std::printf("%s\n", line);
  std::fflush(stdout);
}

DatasetPtr load_dataset(const std::string& path) {
  ltvit_dataset* ds = nullptr;
  check(ltvit_dataset_load(path.c_str(), &ds));
  return DatasetPtr(ds);
}

ConfigPtr load_config(const std::string& path) {
  ltvit_config* c = nullptr;
  check(path.empty() ? ltvit_config_default(&c) : ltvit_config_load(path.c_str(), &c));
  return ConfigPtr(c);
}

std::string config_value(const ltvit_config* c, const char* key) {
  char* v = nullptr;
  check(ltvit_config_get(c, key, &v));
  return StringPtr(v).get();
}

// A flag wins over the config file; one of them must supply the value.
std::string resolve(ltvit_config* c, const char* key, const std::string& flag) {
  if (!flag.empty()) check(ltvit_config_set(c, key, flag.c_str()));
  std::string v = config_value(c, key);
  if (v.empty()) {
    std::fprintf(stderr, "ltvit: --%s is required (flag or config key '%s')\n", key, key);
    throw Failure{1};
  }
  return v;
}

struct GenData {
  std::string out;
  std::size_t count = 0;
  std::uint64_t seed = 0;
  std::size_t labels = 4;
  std::size_t size = 32;
  double noise = 0.05;
};

struct Train {
  std::string config, data, val, out, init;
  std::size_t threads = 0;
};

struct Eval {
  std::string checkpoint, data;
};

struct Ablate {
  std::string config, data, val, out, modes = "all";
  std::size_t threads = 0;
};

struct Attnmap {
  std::string checkpoint, data, out, reduce = "mean";
  std::size_t sample = 0;
  std::int64_t label = -1;
  std::int64_t blur = -1;
};

void apply_threads(ltvit_config* c, std::size_t threads) {
  if (threads > 0) check(ltvit_config_set(c, "threads", std::to_string(threads).c_str()));
}

void run_gen_data(const GenData& o) {
  ltvit_dataset* ds = nullptr;
  check(ltvit_dataset_generate(o.count, o.seed, o.labels, o.size, o.noise, &ds));
  DatasetPtr owned(ds);
  check(ltvit_dataset_save(ds, o.out.c_str()));
  std::printf("wrote %zu samples to %s\n", ltvit_dataset_count(ds), o.out.c_str());
}

void run_train(const Train& o) {
  ConfigPtr c = load_config(o.config);
  apply_threads(c.get(), o.threads);
  const std::string data = resolve(c.get(), "data", o.data);
  const std::string out = resolve(c.get(), "out", o.out);
  if (!o.init.empty()) check(ltvit_config_set(c.get(), "init", o.init.c_str()));
  if (!o.val.empty()) check(ltvit_config_set(c.get(), "val_data", o.val.c_str()));
  const std::string val = config_value(c.get(), "val_data");
  DatasetPtr train = load_dataset(data);
  DatasetPtr valset = val.empty() ? nullptr : load_dataset(val);
  check(ltvit_train(c.get(), train.get(), valset.get(), out.c_str(), print_line, nullptr));
}

void run_eval(const Eval& o) {
  ltvit_model* m = nullptr;
  check(ltvit_model_load(o.checkpoint.c_str(), &m));
  ModelPtr model(m);
  DatasetPtr ds = load_dataset(o.data);
  char* json = nullptr;
  check(ltvit_model_evaluate(model.get(), ds.get(), &json));
  std::printf("%s\n", StringPtr(json).get());
}

void run_ablate(const Ablate& o) {
  ConfigPtr c = load_config(o.config);
  apply_threads(c.get(), o.threads);
  const std::string data = resolve(c.get(), "data", o.data);
  const std::string out = resolve(c.get(), "out", o.out);
  if (!o.val.empty()) check(ltvit_config_set(c.get(), "val_data", o.val.c_str()));
  const std::string val = config_value(c.get(), "val_data");
  DatasetPtr train = load_dataset(data);
  DatasetPtr valset = val.empty() ? nullptr : load_dataset(val);
  char* table = nullptr;
  check(ltvit_ablate(c.get(), train.get(), valset.get(), o.modes.c_str(), out.c_str(),
                     print_line, nullptr, &table));
  std::printf("%s", StringPtr(table).get());
}

void run_attnmap(const Attnmap& o) {
  DatasetPtr ds = load_dataset(o.data);
  char* masses = nullptr;
  check(ltvit_attnmap(o.checkpoint.c_str(), ds.get(), o.sample, o.label, o.blur,
                      o.reduce.c_str(), o.out.c_str(), &masses));
  std::printf("%s", StringPtr(masses).get());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ltvit: vision transformer with label tokens"};
  app.require_subcommand(1);

  GenData gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic LTDS dataset");
  gen_cmd->add_option("--out", gen.out, "Output file")->required();
  gen_cmd->add_option("--count", gen.count, "Number of samples")->required();
  gen_cmd->add_option("--seed", gen.seed, "Generator seed");
  gen_cmd->add_option("--labels", gen.labels, "Number of labels (at most 4)");
  gen_cmd->add_option("--size", gen.size, "Image height and width (even)");
  gen_cmd->add_option("--noise", gen.noise, "Gaussian pixel noise std");

  Train tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model into a run directory");
  train_cmd->add_option("--config", tr.config, "Config file (key = value)");
  train_cmd->add_option("--data", tr.data, "Training dataset");
  train_cmd->add_option("--val", tr.val, "Validation dataset");
  train_cmd->add_option("--out", tr.out, "Run directory");
  train_cmd->add_option("--init", tr.init, "Checkpoint to initialise from");
  train_cmd->add_option("--threads", tr.threads, "Worker threads");

  Eval ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint, print a JSON report");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--data", ev.data, "Dataset")->required();

  Ablate ab;
  auto* ablate_cmd = app.add_subcommand("ablate", "Train one model per attention mode");
  ablate_cmd->add_option("--config", ab.config, "Base config file");
  ablate_cmd->add_option("--data", ab.data, "Training dataset");
  ablate_cmd->add_option("--val", ab.val, "Validation dataset");
  ablate_cmd->add_option("--out", ab.out, "Output directory");
  ablate_cmd->add_option("--modes", ab.modes, "all, or comma-separated mode names");
  ablate_cmd->add_option("--threads", ab.threads, "Worker threads");

  Attnmap am;
  auto* attn_cmd = app.add_subcommand("attnmap", "Export attention heatmaps as PGM");
  attn_cmd->add_option("--checkpoint", am.checkpoint, "Checkpoint file")->required();
  attn_cmd->add_option("--data", am.data, "Dataset")->required();
  attn_cmd->add_option("--sample", am.sample, "Sample index")->required();
  attn_cmd->add_option("--label", am.label, "Label index (default: every label)");
  attn_cmd->add_option("--out", am.out, "Output directory")->required();
  attn_cmd->add_option("--blur", am.blur, "Box blur radius (default: patch / 2)");
  attn_cmd->add_option("--reduce", am.reduce, "Block reduction: mean or last");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen_cmd) run_gen_data(gen);
    else if (*train_cmd) run_train(tr);
    else if (*eval_cmd) run_eval(ev);
    else if (*ablate_cmd) run_ablate(ab);
    else if (*attn_cmd) run_attnmap(am);
  } catch (const Failure& f) {
    return f.code;
  }
  return 0;
}
