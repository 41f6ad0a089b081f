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

#include "core/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "core/error.hpp"

namespace ltvit {

bool RunConfig::operator==(const RunConfig& o) const {
  const auto& a = schedule;
  const auto& b = o.schedule;
  return model == o.model && a.epochs == b.epochs && a.batch_size == b.batch_size &&
         a.seed == b.seed && a.cosine == b.cosine && a.warmup_steps == b.warmup_steps && a.adam == b.adam &&
         a.threads == b.threads && val_split == o.val_split && data == o.data &&
         val_data == o.val_data && out == o.out && init == o.init;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::string_view trim(std::string_view s) {
  const auto lo = s.find_first_not_of(" \t\r");
  if (lo == std::string_view::npos) return {};
  const auto hi = s.find_last_not_of(" \t\r");
  return s.substr(lo, hi - lo + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* want) {
  fail(ErrorKind::kConfig, "config key '" + std::string(key) + "': '" + std::string(value) +
                               "' is not " + want);
}

std::size_t to_size(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    bad_value(key, v, "a non-negative integer");
  return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    bad_value(key, v, "a non-negative integer");
  return out;
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) bad_value(key, v, "a number");
  return out;
}

struct Entry {
  std::string_view key;
  std::string_view doc;
  bool environment;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

#define LTVIT_SIZE_KEY(name, field, doc)                                           \
  Entry {                                                                          \
    name, doc, false, [](const RunConfig& c) { return std::to_string(c.field); }, \
        [](RunConfig& c, std::string_view v) { c.field = to_size(name, v); }       \
  }
#define LTVIT_DOUBLE_KEY(name, field, doc)                                          \
  Entry {                                                                           \
    name, doc, false, [](const RunConfig& c) { return format_double(c.field); },   \
        [](RunConfig& c, std::string_view v) { c.field = to_double(name, v); }      \
  }
#define LTVIT_PATH_KEY(name, field, doc)                                  \
  Entry {                                                                 \
    name, doc, true, [](const RunConfig& c) { return c.field; },         \
        [](RunConfig& c, std::string_view v) { c.field = std::string(v); } \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      LTVIT_SIZE_KEY("image_height", model.image_height, "image height in pixels"),
      LTVIT_SIZE_KEY("image_width", model.image_width, "image width in pixels"),
      LTVIT_SIZE_KEY("channels", model.channels, "image channels"),
      LTVIT_SIZE_KEY("patch", model.patch, "patch size in pixels"),
      LTVIT_SIZE_KEY("dim", model.dim, "hidden width D"),
      LTVIT_SIZE_KEY("heads", model.heads, "attention heads; must divide dim"),
      LTVIT_SIZE_KEY("depth", model.depth, "total number of blocks"),
      LTVIT_SIZE_KEY("n1", model.n1, "leading image-only blocks"),
      LTVIT_SIZE_KEY("n2", model.n2, "trailing label-token blocks; n1 + n2 = depth"),
      LTVIT_SIZE_KEY("labels", model.labels, "number of labels"),
      Entry{"mode", "fullself | oneway | onewaynolabelself | baseline", false,
            [](const RunConfig& c) { return std::string(mode_name(c.model.mode)); },
            [](RunConfig& c, std::string_view v) {
              auto m = parse_mode(v);
              if (!m) bad_value("mode", v, "an attention mode");
              c.model.mode = *m;
            }},
      LTVIT_DOUBLE_KEY("dropout", model.dropout, "dropout rate in [0, 1)"),
      LTVIT_DOUBLE_KEY("lr", schedule.adam.lr, "peak Adam learning rate"),
      LTVIT_DOUBLE_KEY("beta1", schedule.adam.beta1, "Adam first-moment decay"),
      LTVIT_DOUBLE_KEY("beta2", schedule.adam.beta2, "Adam second-moment decay"),
      LTVIT_DOUBLE_KEY("adam_eps", schedule.adam.eps, "Adam denominator epsilon"),
      LTVIT_DOUBLE_KEY("weight_decay", schedule.adam.weight_decay, "L2 weight decay"),
      Entry{"lr_schedule", "cosine | constant", false,
            [](const RunConfig& c) { return std::string(c.schedule.cosine ? "cosine" : "constant"); },
            [](RunConfig& c, std::string_view v) {
              if (v == "cosine") c.schedule.cosine = true;
              else if (v == "constant") c.schedule.cosine = false;
              else bad_value("lr_schedule", v, "cosine or constant");
            }},
      Entry{"warmup_steps", "optimizer steps of linear learning-rate warmup", false,
            [](const RunConfig& c) { return std::to_string(c.schedule.warmup_steps); },
            [](RunConfig& c, std::string_view v) {
              c.schedule.warmup_steps = to_u64("warmup_steps", v);
            }},
      LTVIT_SIZE_KEY("epochs", schedule.epochs, "training epochs"),
      LTVIT_SIZE_KEY("batch_size", schedule.batch_size, "samples per optimizer step"),
      Entry{"seed", "run seed (initialisation, shuffling, dropout)", false,
            [](const RunConfig& c) { return std::to_string(c.schedule.seed); },
            [](RunConfig& c, std::string_view v) { c.schedule.seed = to_u64("seed", v); }},
      LTVIT_DOUBLE_KEY("val_split", val_split, "validation fraction when no val_data is given"),
      Entry{"threads", "worker threads; results do not depend on it", true,
            [](const RunConfig& c) { return std::to_string(c.schedule.threads); },
            [](RunConfig& c, std::string_view v) { c.schedule.threads = to_size("threads", v); }},
      LTVIT_PATH_KEY("data", data, "training dataset (LTDS)"),
      LTVIT_PATH_KEY("val_data", val_data, "validation dataset (LTDS), optional"),
      LTVIT_PATH_KEY("out", out, "run directory"),
      LTVIT_PATH_KEY("init", init, "checkpoint to initialise from, optional"),
  };
  return table;
}

#undef LTVIT_SIZE_KEY
#undef LTVIT_DOUBLE_KEY
#undef LTVIT_PATH_KEY

}  // namespace

std::vector<ConfigKey> config_keys() {
  std::vector<ConfigKey> out;
  for (const auto& e : entries()) out.push_back({e.key, e.doc});
  return out;
}

void set_config_value(RunConfig& config, std::string_view key, std::string_view value) {
  for (const auto& e : entries())
    if (e.key == key) {
      e.set(config, value);
      return;
    }
  fail(ErrorKind::kConfig, "unknown config key '" + std::string(key) + "'");
}

std::string get_config_value(const RunConfig& config, std::string_view key) {
  for (const auto& e : entries())
    if (e.key == key) return e.get(config);
  fail(ErrorKind::kConfig, "unknown config key '" + std::string(key) + "'");
}

RunConfig parse_run_config(std::string_view text) {
  RunConfig config;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      fail(ErrorKind::kConfig, "config line " + std::to_string(line_no) + ": expected key=value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (!seen.insert(std::string(key)).second)
      fail(ErrorKind::kConfig, "config line " + std::to_string(line_no) + ": key '" +
                                   std::string(key) + "' repeated");
    set_config_value(config, key, value);
  }
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorKind::kIo, "cannot open config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str());
}

std::string serialize_run_config(const RunConfig& config, bool include_environment) {
  std::string out;
  for (const auto& e : entries()) {
    if (e.environment && !include_environment) continue;
    out += "# " + std::string(e.doc) + "\n";
    out += std::string(e.key) + " = " + e.get(config) + "\n";
  }
  return out;
}

}  // namespace ltvit
