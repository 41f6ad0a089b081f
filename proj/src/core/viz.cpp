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

#include "core/viz.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "core/data.hpp"
#include "core/error.hpp"

namespace ltvit {

std::optional<BlockReduce> parse_reduce(std::string_view name) {
  if (name == "last") return BlockReduce::kLastBlock;
  if (name == "mean") return BlockReduce::kMeanBlocks;
  return std::nullopt;
}

std::string_view reduce_name(BlockReduce reduce) {
  return reduce == BlockReduce::kLastBlock ? "last" : "mean";
}

namespace {

Tensor extract_query(const AttentionTrace& trace, int query, BlockReduce reduce) {
  if (!trace.enabled)
    fail(ErrorKind::kContract, "attention capture was not enabled for this forward pass");
  if (trace.reduce_blocks.empty())
    fail(ErrorKind::kContract, "attention trace holds no blocks");
  const std::size_t n = trace.grid_height * trace.grid_width;

  // block -> (sum of renormalised head rows, head count)
  std::map<std::size_t, std::pair<std::vector<double>, std::size_t>> per_block;
  for (const AttentionRecord& rec : trace.records) {
    if (rec.query != query) continue;
    if (rec.row.size() < n + 1)
      fail(ErrorKind::kContract, "attention row shorter than the patch key set");
    double mass = 0.0;
    for (std::size_t j = 1; j <= n; ++j) mass += rec.row[j];
    if (!(mass > 0.0))
      fail(ErrorKind::kNumeric, "attention row has no mass on image patches");
    auto& [acc, heads] = per_block[rec.block];
    acc.resize(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) acc[j] += rec.row[j + 1] / mass;
    ++heads;
  }

  std::vector<std::size_t> blocks;
  if (reduce == BlockReduce::kLastBlock)
    blocks.push_back(*std::max_element(trace.reduce_blocks.begin(), trace.reduce_blocks.end()));
  else
    blocks = trace.reduce_blocks;

  Tensor grid({trace.grid_height, trace.grid_width});
  for (std::size_t b : blocks) {
    auto it = per_block.find(b);
    if (it == per_block.end())
      fail(ErrorKind::kContract, "no attention records for block " + std::to_string(b));
    const auto& [acc, heads] = it->second;
    for (std::size_t j = 0; j < n; ++j)
      grid[j] += acc[j] / static_cast<double>(heads) / static_cast<double>(blocks.size());
  }
  return grid;
}

std::size_t reflect(std::ptrdiff_t k, std::size_t n) {
  const auto period = static_cast<std::ptrdiff_t>(2 * n);
  std::ptrdiff_t m = k % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<std::ptrdiff_t>(n) ? m : period - 1 - m);
}

void box_blur_axis(std::vector<double>& data, std::size_t rows, std::size_t cols,
                   std::size_t radius, bool along_rows) {
  std::vector<double> out(data.size(), 0.0);
  const double norm = 1.0 / static_cast<double>(2 * radius + 1);
  const auto r = static_cast<std::ptrdiff_t>(radius);
  for (std::size_t y = 0; y < rows; ++y)
    for (std::size_t x = 0; x < cols; ++x) {
      double s = 0.0;
      for (std::ptrdiff_t k = -r; k <= r; ++k) {
        if (along_rows)
          s += data[y * cols + reflect(static_cast<std::ptrdiff_t>(x) + k, cols)];
        else
          s += data[reflect(static_cast<std::ptrdiff_t>(y) + k, rows) * cols + x];
      }
      out[y * cols + x] = s * norm;
    }
  data.swap(out);
}

}  // namespace

Tensor extract_label_attention(const AttentionTrace& trace, std::size_t label,
                               BlockReduce reduce) {
  if (trace.labels == 0)
    fail(ErrorKind::kContract, "model has no label tokens (baseline mode)");
  if (label >= trace.labels)
    fail(ErrorKind::kContract, "label " + std::to_string(label) + " out of range [0, " +
                                   std::to_string(trace.labels) + ")");
  return extract_query(trace, static_cast<int>(label), reduce);
}

Tensor extract_cls_attention(const AttentionTrace& trace, BlockReduce reduce) {
  return extract_query(trace, AttentionRecord::kClsQuery, reduce);
}

Tensor upsample_and_blur(const Tensor& grid, std::size_t height, std::size_t width,
                         std::size_t blur_radius) {
  if (grid.rank() != 2)
    fail(ErrorKind::kDimension, "upsample: grid must be a matrix, got " +
                                    shape_string(grid.shape()));
  const std::size_t gh = grid.shape()[0], gw = grid.shape()[1];
  auto src_coord = [](std::size_t i, std::size_t out_n, std::size_t in_n) {
    double s = (static_cast<double>(i) + 0.5) * static_cast<double>(in_n) /
                   static_cast<double>(out_n) - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in_n - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(s));
    const std::size_t i1 = std::min(i0 + 1, in_n - 1);
    return std::tuple{i0, i1, s - static_cast<double>(i0)};
  };
  std::vector<double> map(height * width);
  for (std::size_t y = 0; y < height; ++y) {
    const auto [y0, y1, wy] = src_coord(y, height, gh);
    for (std::size_t x = 0; x < width; ++x) {
      const auto [x0, x1, wx] = src_coord(x, width, gw);
      map[y * width + x] = (1 - wy) * ((1 - wx) * grid.at(y0, x0) + wx * grid.at(y0, x1)) +
                           wy * ((1 - wx) * grid.at(y1, x0) + wx * grid.at(y1, x1));
    }
  }
  if (blur_radius > 0) {
    box_blur_axis(map, height, width, blur_radius, true);
    box_blur_axis(map, height, width, blur_radius, false);
  }
  return Tensor({height, width}, std::move(map));
}

Tensor normalize_minmax(const Tensor& map) {
  auto v = map.data();
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  Tensor out(map.shape());
  const double range = *hi - *lo;
  if (!(range > 1e-12 * std::max(1.0, std::abs(*hi)))) return out;
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *lo) / range;
  return out;
}

Tensor smooth_and_upsample(const Tensor& grid, std::size_t height, std::size_t width,
                           std::size_t blur_radius) {
  return normalize_minmax(upsample_and_blur(grid, height, width, blur_radius));
}

std::array<double, 4> quadrant_masses(const Tensor& map) {
  if (map.rank() != 2)
    fail(ErrorKind::kDimension, "quadrant_mass: map must be a matrix");
  const std::size_t h = map.shape()[0], w = map.shape()[1];
  std::array<double, 4> mass{};
  double total = 0.0;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      mass[quadrant_of(y, x, h, w)] += map.at(y, x);
      total += map.at(y, x);
    }
  if (!(total > 0.0)) return {0.25, 0.25, 0.25, 0.25};
  for (double& m : mass) m /= total;
  return mass;
}

double quadrant_mass(const Tensor& map, std::size_t quadrant) {
  if (quadrant > 3)
    fail(ErrorKind::kContract, "quadrant must be 0..3, got " + std::to_string(quadrant));
  return quadrant_masses(map)[quadrant];
}

std::vector<unsigned char> encode_pgm(const Tensor& heatmap) {
  if (heatmap.rank() != 2)
    fail(ErrorKind::kDimension, "write_pgm: heatmap must be a matrix");
  const std::size_t h = heatmap.shape()[0], w = heatmap.shape()[1];
  const std::string header = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(header.size() + h * w);
  for (double v : heatmap.data()) {
    if (!(v >= 0.0 && v <= 1.0))
      fail(ErrorKind::kContract, "write_pgm: value " + std::to_string(v) + " outside [0, 1]");
    out.push_back(static_cast<unsigned char>(std::lround(255.0 * v)));
  }
  return out;
}

void write_pgm(const Tensor& heatmap, const std::filesystem::path& path) {
  const auto bytes = encode_pgm(heatmap);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) fail(ErrorKind::kIo, "write failed: " + path.string());
}

}  // namespace ltvit
