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

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "core/checkpoint.hpp"
#include "core/config.hpp"
#include "core/viz.hpp"

namespace ltvit {

using LogSink = std::function<void(std::string_view line)>;

// Trains into `out`: config.txt (full config echo), train.log (one JSON
// object per epoch), best.ltck and last.ltck (the latter with optimizer
// state). Validation uses `val` when given, otherwise the tail
// config.val_split of `data`; with neither, best means lowest training loss.
// When config.init names a checkpoint, shared tensors are copied from it and
// the rest start fresh.
struct RunResult {
  TrainResult train;
  std::vector<std::string> fresh;  // tensors not found in the init checkpoint
};
RunResult run_training(const RunConfig& config, const Dataset& data, const Dataset* val,
                       const std::filesystem::path& out, const LogSink& log = {});

// The config `base` becomes under another attention mode. Baseline drops the
// label-token blocks (n2 = 0); the label-token modes keep the base split, or
// move min(4, depth) blocks into it when the base is a baseline config.
RunConfig ablation_config(const RunConfig& base, AttentionMode mode);

struct AblationRow {
  AttentionMode mode = AttentionMode::kOneWay;
  std::optional<double> macro_auc;  // best validation macro AUC
  std::size_t best_epoch = 0;
  double seconds = 0.0;  // wall time of the run; not part of the table
};

// One training run per mode under out/<mode>, then ablation.txt with the
// comparison table. Requires a validation set.
std::vector<AblationRow> run_ablation(const RunConfig& base, const Dataset& data,
                                      const Dataset* val,
                                      std::span<const AttentionMode> modes,
                                      const std::filesystem::path& out,
                                      const LogSink& log = {});
// "all" or a comma-separated list of mode names.
std::vector<AttentionMode> parse_mode_list(std::string_view text);
std::string format_ablation_table(std::span<const AblationRow> rows);

// Pre-normalisation heatmaps at pixel resolution for one image.
struct AttentionMaps {
  Tensor cls;
  std::vector<Tensor> labels;  // empty for a baseline model
};
AttentionMaps attention_maps(const ModelConfig& config, const Parameters& params,
                             const Tensor& image, std::size_t blur_radius,
                             BlockReduce reduce = BlockReduce::kMeanBlocks);

struct AttnmapRequest {
  std::size_t sample = 0;
  std::optional<std::size_t> label;  // every label when absent
  std::optional<std::size_t> blur_radius;  // patch / 2 when absent
  BlockReduce reduce = BlockReduce::kMeanBlocks;
};

// Writes cls.pgm, lbl_<k>.pgm and masses.txt (quadrant masses of the
// pre-normalisation maps) into `out`. Returns the side-car text.
std::string run_attnmap(const Checkpoint& ckpt, const Dataset& ds, const AttnmapRequest& req,
                        const std::filesystem::path& out);

}  // namespace ltvit
