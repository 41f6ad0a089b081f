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

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "core/model.hpp"
#include "core/train.hpp"

namespace ltvit {

struct RunConfig {
  ModelConfig model;
  TrainSchedule schedule;
  double val_split = 0.2;  // used only when no separate validation file is given
  std::string data, val_data, out, init;

  bool operator==(const RunConfig& other) const;
};

struct ConfigKey {
  std::string_view key;
  std::string_view doc;
};

// Every accepted key with a one-line description, in serialisation order.
std::vector<ConfigKey> config_keys();

// Flat "key = value" lines; '#' starts a comment. Unknown or repeated keys,
// malformed values and lines without '=' are kConfig errors. Keys not given
// keep their defaults. The model invariants are not checked here.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);
void set_config_value(RunConfig& config, std::string_view key, std::string_view value);
std::string get_config_value(const RunConfig& config, std::string_view key);

// Canonical text with every key. Doubles use the shortest round-trip form,
// so parse_run_config(serialize_run_config(c)) == c. When
// include_environment is false, path and thread keys are omitted; that form
// goes into checkpoints so they do not depend on where a run was launched.
std::string serialize_run_config(const RunConfig& config, bool include_environment = true);

std::string format_double(double v);

}  // namespace ltvit
