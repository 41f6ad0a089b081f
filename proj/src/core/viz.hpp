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
#include <optional>
#include <string_view>

#include "core/model.hpp"

namespace ltvit {

enum class BlockReduce { kLastBlock, kMeanBlocks };

std::optional<BlockReduce> parse_reduce(std::string_view name);
std::string_view reduce_name(BlockReduce reduce);

// Attention of one query over the image patches, as a grid_height x
// grid_width tensor summing to 1. Each record's patch entries (CLS and label
// keys dropped) are renormalised, averaged over heads, then reduced over the
// trace's blocks.
Tensor extract_label_attention(const AttentionTrace& trace, std::size_t label,
                               BlockReduce reduce = BlockReduce::kMeanBlocks);
Tensor extract_cls_attention(const AttentionTrace& trace,
                             BlockReduce reduce = BlockReduce::kMeanBlocks);

// Bilinear upsampling (pixel-centre aligned) followed by a separable box blur
// with half-sample symmetric boundaries. The blur preserves total mass.
Tensor upsample_and_blur(const Tensor& grid, std::size_t height, std::size_t width,
                         std::size_t blur_radius);
// Min-max normalisation to [0, 1]; a constant map becomes all zeros.
Tensor normalize_minmax(const Tensor& map);
Tensor smooth_and_upsample(const Tensor& grid, std::size_t height, std::size_t width,
                           std::size_t blur_radius);

// Fraction of the map's total mass inside one quadrant
// (0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right).
double quadrant_mass(const Tensor& map, std::size_t quadrant);
std::array<double, 4> quadrant_masses(const Tensor& map);

// Binary greyscale PGM (P5, maxval 255), value = round(255 * v).
void write_pgm(const Tensor& heatmap, const std::filesystem::path& path);
std::vector<unsigned char> encode_pgm(const Tensor& heatmap);

}  // namespace ltvit
