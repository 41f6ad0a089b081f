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

#include "core/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>

#include "core/error.hpp"

namespace ltvit {

Tensor Dataset::image(std::size_t i) const {
  const Sample& s = samples.at(i);
  return Tensor({height, width, channels},
                std::vector<double>(s.pixels.begin(), s.pixels.end()));
}

std::size_t quadrant_of(std::size_t y, std::size_t x, std::size_t height,
                        std::size_t width) {
  return (y >= height / 2 ? 2 : 0) + (x >= width / 2 ? 1 : 0);
}

namespace {

bool shape_cell(std::size_t label, std::size_t i, std::size_t j, std::size_t s) {
  const std::size_t thick = std::max<std::size_t>(1, s / 5);
  const std::size_t lo = s / 2 - std::min(s / 2, thick / 2);
  switch (label) {
    case 0:
      return true;
    case 1:
      return i == 0 || j == 0 || i + 1 == s || j + 1 == s;
    case 2:
      return (i >= lo && i < lo + thick) || (j >= lo && j < lo + thick);
    default: {
      const std::size_t d = i > j ? i - j : j - i;
      return d < thick;
    }
  }
}

}  // namespace

Dataset generate_synthetic(std::size_t count, std::uint64_t seed,
                           const SyntheticConfig& config) {
  if (config.labels > 4)
    fail(ErrorKind::kContract, "labels must be <= 4 (one quadrant per label), got " +
                                   std::to_string(config.labels));
  if (config.labels == 0) fail(ErrorKind::kContract, "labels must be >= 1");
  if (config.height < 2 || config.width < 2 || config.height % 2 || config.width % 2)
    fail(ErrorKind::kContract, "image extents must be even, got " +
                                   std::to_string(config.height) + "x" +
                                   std::to_string(config.width));
  if (config.channels == 0) fail(ErrorKind::kContract, "channels must be >= 1");
  if (!(config.noise_std >= 0.0))
    fail(ErrorKind::kContract, "noise_std must be >= 0");
  if (config.height > 65535 || config.width > 65535 || config.channels > 255)
    fail(ErrorKind::kContract, "image extents exceed the dataset format limits");

  Dataset ds;
  ds.height = config.height;
  ds.width = config.width;
  ds.channels = config.channels;
  ds.labels = config.labels;
  ds.samples.reserve(count);

  const std::size_t qh = config.height / 2, qw = config.width / 2;
  const std::size_t qmin = std::min(qh, qw);
  const std::size_t s_lo = std::max<std::size_t>(1, qmin / 2);
  const std::size_t s_hi = std::max(s_lo, qmin * 3 / 4);

  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  std::uniform_real_distribution<double> intensity(0.7, 1.0);
  std::normal_distribution<double> noise(0.0, config.noise_std > 0 ? config.noise_std : 1.0);

  const std::size_t hw = config.height * config.width;
  std::vector<double> canvas(hw);
  for (std::size_t n = 0; n < count; ++n) {
    std::fill(canvas.begin(), canvas.end(), 0.0);
    Sample smp;
    smp.targets.assign(config.labels, 0);
    smp.regions.assign(config.labels, kNoRegion);
    for (std::size_t k = 0; k < config.labels; ++k) {
      if (!coin(rng)) continue;
      smp.targets[k] = 1;
      smp.regions[k] = static_cast<std::uint8_t>(k);
      const std::size_t s = std::uniform_int_distribution<std::size_t>(s_lo, s_hi)(rng);
      const std::size_t y0 = (k / 2) * qh, x0 = (k % 2) * qw;
      const std::size_t oy = y0 + std::uniform_int_distribution<std::size_t>(0, qh - s)(rng);
      const std::size_t ox = x0 + std::uniform_int_distribution<std::size_t>(0, qw - s)(rng);
      const double level = intensity(rng);
      for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = 0; j < s; ++j)
          if (shape_cell(k, i, j, s)) canvas[(oy + i) * config.width + ox + j] = level;
    }
    smp.pixels.resize(hw * config.channels);
    for (std::size_t p = 0; p < hw; ++p)
      for (std::size_t ch = 0; ch < config.channels; ++ch) {
        double v = canvas[p];
        if (config.noise_std > 0) v = std::clamp(v + noise(rng), 0.0, 1.0);
        smp.pixels[p * config.channels + ch] = static_cast<float>(v);
      }
    ds.samples.push_back(std::move(smp));
  }
  return ds;
}

namespace {

constexpr std::size_t kHeaderBytes = 16;

void put_u16(std::vector<char>& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::vector<char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

std::uint16_t get_u16(const char* p) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(p[0]) |
                                    (static_cast<unsigned char>(p[1]) << 8));
}

}  // namespace

void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
  if (ds.height > 65535 || ds.width > 65535 || ds.channels > 255 || ds.labels > 255 ||
      ds.samples.size() > 0xffffffffULL)
    fail(ErrorKind::kFormat, "dataset extents exceed the LTDS field widths");
  const std::size_t pixels = ds.height * ds.width * ds.channels;
  std::vector<char> out;
  out.reserve(kHeaderBytes + ds.size() * (pixels * 4 + 2 * ds.labels));
  out.insert(out.end(), {'L', 'T', 'D', 'S'});
  put_u16(out, kDatasetVersion);
  put_u32(out, static_cast<std::uint32_t>(ds.size()));
  put_u16(out, static_cast<std::uint16_t>(ds.height));
  put_u16(out, static_cast<std::uint16_t>(ds.width));
  out.push_back(static_cast<char>(ds.channels));
  out.push_back(static_cast<char>(ds.labels));
  for (const Sample& s : ds.samples) {
    if (s.pixels.size() != pixels || s.targets.size() != ds.labels ||
        s.regions.size() != ds.labels)
      fail(ErrorKind::kFormat, "sample does not match the dataset extents");
    for (float f : s.pixels) put_u32(out, std::bit_cast<std::uint32_t>(f));
    out.insert(out.end(), s.targets.begin(), s.targets.end());
    out.insert(out.end(), s.regions.begin(), s.regions.end());
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) fail(ErrorKind::kIo, "write failed: " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::kIo, "cannot open dataset " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const std::string where = " in " + path.string();

  if (buf.size() >= 4 && std::string_view(buf.data(), 4) != "LTDS")
    fail(ErrorKind::kBadMagic, "bad magic (expected LTDS)" + where);
  if (buf.size() < kHeaderBytes)
    fail(ErrorKind::kTruncated, "truncated header" + where);
  const std::uint16_t version = get_u16(buf.data() + 4);
  if (version != kDatasetVersion)
    fail(ErrorKind::kBadVersion, "unsupported LTDS version " + std::to_string(version) + where);

  Dataset ds;
  const std::size_t count = get_u32(buf.data() + 6);
  ds.height = get_u16(buf.data() + 10);
  ds.width = get_u16(buf.data() + 12);
  ds.channels = static_cast<unsigned char>(buf[14]);
  ds.labels = static_cast<unsigned char>(buf[15]);
  const std::size_t pixels = ds.height * ds.width * ds.channels;
  const std::size_t record = pixels * 4 + 2 * ds.labels;
  const std::size_t expected = kHeaderBytes + count * record;
  if (buf.size() < expected)
    fail(ErrorKind::kTruncated, "truncated: " + std::to_string(buf.size()) + " bytes, header declares " +
                                    std::to_string(expected) + where);
  if (buf.size() > expected)
    fail(ErrorKind::kFormat, std::to_string(buf.size() - expected) + " trailing bytes" + where);

  ds.samples.resize(count);
  const char* p = buf.data() + kHeaderBytes;
  for (Sample& s : ds.samples) {
    s.pixels.resize(pixels);
    for (float& v : s.pixels) {
      v = std::bit_cast<float>(get_u32(p));
      p += 4;
    }
    s.targets.assign(p, p + ds.labels);
    p += ds.labels;
    s.regions.assign(p, p + ds.labels);
    p += ds.labels;
    for (std::size_t k = 0; k < ds.labels; ++k) {
      if (s.targets[k] > 1) fail(ErrorKind::kFormat, "non-binary target" + where);
      if (s.regions[k] > 3 && s.regions[k] != kNoRegion)
        fail(ErrorKind::kFormat, "invalid region id" + where);
    }
  }
  return ds;
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t count,
                                                    std::size_t batch_size,
                                                    std::uint64_t shuffle_seed) {
  if (batch_size == 0) fail(ErrorKind::kContract, "batch_size must be >= 1");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(shuffle_seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < count; i += batch_size)
    batches.emplace_back(order.begin() + i, order.begin() + std::min(count, i + batch_size));
  return batches;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    fail(ErrorKind::kContract, "split fraction must lie in [0, 1]");
  const auto tail = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ds.size())));
  Dataset head = ds, rest = ds;
  head.samples.assign(ds.samples.begin(), ds.samples.end() - static_cast<std::ptrdiff_t>(tail));
  rest.samples.assign(ds.samples.end() - static_cast<std::ptrdiff_t>(tail), ds.samples.end());
  return {std::move(head), std::move(rest)};
}

}  // namespace ltvit
