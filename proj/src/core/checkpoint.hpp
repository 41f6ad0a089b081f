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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "core/config.hpp"

namespace ltvit {

// LTCK layout, little-endian:
//   "LTCK" u16 version
//   u32 config length, config text (serialize_run_config without environment keys)
//   u64 step
//   u32 tensor count; per tensor: u16 name length, name, u8 rank,
//       rank x u32 extents, f32 data
//   u8 has optimizer state; if set: u64 optimizer step, then per tensor the
//       first and second moments as f64
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  RunConfig config;
  std::uint64_t step = 0;
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::optional<OptimState> optim;
};

Checkpoint make_checkpoint(const RunConfig& config, const Parameters& params,
                           const OptimState* optim = nullptr);

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Strict load: the checkpoint's model config must equal `model` (dropout
// aside) and every tensor must match by name and shape.
Parameters parameters_from_checkpoint(const Checkpoint& ckpt, const ModelConfig& model);

struct TransferReport {
  std::vector<std::string> loaded;
  std::vector<std::string> fresh;
};

// Copies every tensor the target model shares with the checkpoint by name;
// tensors missing from the checkpoint (label tokens and heads when the
// source is a baseline model) are freshly initialised from `seed`. A shared
// name with a different shape is a kConfig error.
Parameters transfer_parameters(const Checkpoint& source, const ModelConfig& target,
                               std::uint64_t seed, TransferReport* report = nullptr);

}  // namespace ltvit
