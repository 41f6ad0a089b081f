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
#include <vector>

#include "core/tensor.hpp"

namespace ltvit {

inline constexpr std::uint8_t kNoRegion = 255;

struct Sample {
  std::vector<float> pixels;           // H x W x C, row-major, values in [0, 1]
  std::vector<std::uint8_t> targets;   // one 0/1 byte per label
  std::vector<std::uint8_t> regions;   // quadrant of each positive label, else kNoRegion

  bool operator==(const Sample&) const = default;
};

struct Dataset {
  std::size_t height = 0, width = 0, channels = 0, labels = 0;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  Tensor image(std::size_t i) const;
  bool operator==(const Dataset&) const = default;
};

struct SyntheticConfig {
  std::size_t height = 32, width = 32, channels = 1, labels = 4;
  double noise_std = 0.05;
};

// Quadrants are numbered 0 top-left, 1 top-right, 2 bottom-left,
// 3 bottom-right. Label k, when present, is drawn inside quadrant k with its
// own shape: filled square, hollow square, plus sign, diagonal stripe.
Dataset generate_synthetic(std::size_t count, std::uint64_t seed,
                           const SyntheticConfig& config);

std::size_t quadrant_of(std::size_t y, std::size_t x, std::size_t height,
                        std::size_t width);

// LTDS: "LTDS", u16 version, u32 count, u16 H, u16 W, u8 C, u8 c, then per
// sample H*W*C f32 pixels, c target bytes, c region bytes. Little-endian.
inline constexpr std::uint16_t kDatasetVersion = 1;
void write_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

// Shuffled batches of sample indices; the permutation depends only on
// shuffle_seed. The last batch may be short.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t count,
                                                    std::size_t batch_size,
                                                    std::uint64_t shuffle_seed);

// Deterministic split: the last round(fraction * size) samples form the
// second part.
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double fraction);

}  // namespace ltvit
