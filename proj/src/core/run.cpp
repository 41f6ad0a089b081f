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

#include "core/run.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>

#include "core/error.hpp"

namespace ltvit {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  f << text;
  if (!f) fail(ErrorKind::kIo, "write failed: " + path.string());
}

void make_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create directory " + dir.string() + ": " + ec.message());
}

void emit(const LogSink& log, std::string_view line) {
  if (log) log(line);
}

}  // namespace

RunResult run_training(const RunConfig& config, const Dataset& data, const Dataset* val,
                       const std::filesystem::path& out, const LogSink& log) {
  config.model.validate();
  check_dataset_fits(config.model, data);
  if (val) check_dataset_fits(config.model, *val);

  Dataset train_part, val_part;
  const Dataset* train_set = &data;
  const Dataset* val_set = val;
  if (!val && config.val_split > 0.0) {
    if (!(config.val_split < 1.0))
      fail(ErrorKind::kConfig, "val_split must lie in [0, 1)");
    std::tie(train_part, val_part) = split_dataset(data, config.val_split);
    train_set = &train_part;
    if (val_part.size() > 0) val_set = &val_part;
  }

  RunResult result;
  Parameters params;
  if (!config.init.empty()) {
    const Checkpoint source = load_checkpoint(config.init);
    TransferReport report;
    params = transfer_parameters(source, config.model, config.schedule.seed, &report);
    result.fresh = report.fresh;
    emit(log, "loaded " + std::to_string(report.loaded.size()) + " tensors from " + config.init);
    if (std::find(report.fresh.begin(), report.fresh.end(), "label_tokens") != report.fresh.end())
      emit(log, "initialized label tokens fresh");
    for (const auto& name : report.fresh) emit(log, "fresh: " + name);
  } else {
    params = init_parameters(config.model, config.schedule.seed);
  }

  make_dir(out);
  write_text(out / "config.txt", serialize_run_config(config));
  std::ofstream train_log(out / "train.log", std::ios::binary | std::ios::trunc);
  if (!train_log) fail(ErrorKind::kIo, "cannot open " + (out / "train.log").string());

  auto on_epoch = [&](const EpochLog& entry, const Parameters& p, const OptimState&,
                      bool improved) {
    const std::string line = to_json(entry);
    train_log << line << '\n';
    train_log.flush();
    emit(log, line);
    if (improved) {
      Checkpoint best = make_checkpoint(config, p);
      best.step = entry.step;
      save_checkpoint(best, out / "best.ltck");
    }
  };
  result.train = train(config.model, std::move(params), *train_set, val_set, config.schedule,
                       on_epoch);
  save_checkpoint(make_checkpoint(config, result.train.last, &result.train.state),
                  out / "last.ltck");
  if (!train_log) fail(ErrorKind::kIo, "write failed: " + (out / "train.log").string());
  return result;
}

RunConfig ablation_config(const RunConfig& base, AttentionMode mode) {
  RunConfig c = base;
  c.model.mode = mode;
  if (mode == AttentionMode::kBaseline) {
    c.model.n1 = c.model.depth;
    c.model.n2 = 0;
  } else if (base.model.n2 == 0) {
    c.model.n2 = std::min<std::size_t>(4, c.model.depth);
    c.model.n1 = c.model.depth - c.model.n2;
  }
  c.init.clear();
  return c;
}

std::vector<AblationRow> run_ablation(const RunConfig& base, const Dataset& data,
                                      const Dataset* val,
                                      std::span<const AttentionMode> modes,
                                      const std::filesystem::path& out, const LogSink& log) {
  if (modes.empty()) fail(ErrorKind::kConfig, "ablate: no modes given");
  if (!val && !(base.val_split > 0.0))
    fail(ErrorKind::kConfig, "ablate needs validation data or val_split > 0");
  std::vector<RunConfig> configs;
  for (AttentionMode m : modes) {
    configs.push_back(ablation_config(base, m));
    configs.back().model.validate();
  }

  make_dir(out);
  std::vector<AblationRow> rows;
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const std::string name(mode_name(modes[i]));
    emit(log, "ablate: training " + name);
    const auto start = std::chrono::steady_clock::now();
    const RunResult r =
        run_training(configs[i], data, val, out / name,
                     [&](std::string_view line) { emit(log, name + ": " + std::string(line)); });
    AblationRow row;
    row.mode = modes[i];
    row.best_epoch = r.train.best_epoch;
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    for (const EpochLog& e : r.train.log)
      if (e.epoch == r.train.best_epoch && e.eval) row.macro_auc = e.eval->macro_auc;
    rows.push_back(row);
  }
  write_text(out / "ablation.txt", format_ablation_table(rows));
  return rows;
}

std::vector<AttentionMode> parse_mode_list(std::string_view text) {
  if (text == "all")
    return {AttentionMode::kFullSelf, AttentionMode::kOneWay, AttentionMode::kOneWayNoLabelSelf,
            AttentionMode::kBaseline};
  std::vector<AttentionMode> modes;
  while (true) {
    const auto comma = text.find(',');
    const std::string_view item = text.substr(0, comma);
    const auto mode = parse_mode(item);
    if (!mode)
      fail(ErrorKind::kConfig, "unknown mode '" + std::string(item) +
                                   "' (expected all, fullself, oneway, onewaynolabelself, baseline)");
    if (std::find(modes.begin(), modes.end(), *mode) != modes.end())
      fail(ErrorKind::kConfig, "mode '" + std::string(item) + "' listed twice");
    modes.push_back(*mode);
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return modes;
}

std::string format_ablation_table(std::span<const AblationRow> rows) {
  std::string out = "mode               macro_auc  best_epoch\n";
  for (const AblationRow& r : rows) {
    char buf[96];
    if (r.macro_auc)
      std::snprintf(buf, sizeof buf, "%-18s %9.4f  %10zu\n", std::string(mode_name(r.mode)).c_str(),
                    *r.macro_auc, r.best_epoch);
    else
      std::snprintf(buf, sizeof buf, "%-18s %9s  %10zu\n", std::string(mode_name(r.mode)).c_str(),
                    "n/a", r.best_epoch);
    out += buf;
  }
  return out;
}

AttentionMaps attention_maps(const ModelConfig& config, const Parameters& params,
                             const Tensor& image, std::size_t blur_radius, BlockReduce reduce) {
  Tape tape;
  const BoundParameters bound = bind_parameters_view(tape, params, config.heads);
  ForwardOptions opts;
  opts.capture_attention = true;
  const ForwardResult r = forward(tape, bound, image, config, opts);
  const std::size_t h = config.image_height, w = config.image_width;
  AttentionMaps maps;
  maps.cls = upsample_and_blur(extract_cls_attention(r.trace, reduce), h, w, blur_radius);
  for (std::size_t k = 0; k < r.trace.labels; ++k)
    maps.labels.push_back(
        upsample_and_blur(extract_label_attention(r.trace, k, reduce), h, w, blur_radius));
  return maps;
}

std::string run_attnmap(const Checkpoint& ckpt, const Dataset& ds, const AttnmapRequest& req,
                        const std::filesystem::path& out) {
  const ModelConfig& model = ckpt.config.model;
  check_dataset_fits(model, ds);
  if (req.sample >= ds.size())
    fail(ErrorKind::kContract, "sample " + std::to_string(req.sample) + " out of range [0, " +
                                   std::to_string(ds.size()) + ")");
  if (req.label) {
    if (!model.has_label_tokens())
      fail(ErrorKind::kContract, "checkpoint is a baseline model; it has no label tokens");
    if (*req.label >= model.labels)
      fail(ErrorKind::kContract, "label " + std::to_string(*req.label) + " out of range [0, " +
                                     std::to_string(model.labels) + ")");
  }
  const Parameters params = parameters_from_checkpoint(ckpt, model);
  const std::size_t radius = req.blur_radius.value_or(model.patch / 2);
  const AttentionMaps maps = attention_maps(model, params, ds.image(req.sample), radius, req.reduce);

  make_dir(out);
  std::string side = "sample = " + std::to_string(req.sample) + "\n";
  side += "blur_radius = " + std::to_string(radius) + "\n";
  side += "reduce = " + std::string(reduce_name(req.reduce)) + "\n";
  auto export_map = [&](const std::string& stem, const Tensor& map) {
    write_pgm(normalize_minmax(map), out / (stem + ".pgm"));
    const auto q = quadrant_masses(map);
    for (std::size_t i = 0; i < 4; ++i)
      side += stem + ".q" + std::to_string(i) + " = " + format_double(q[i]) + "\n";
  };
  export_map("cls", maps.cls);
  for (std::size_t k = 0; k < maps.labels.size(); ++k)
    if (!req.label || *req.label == k) export_map("lbl_" + std::to_string(k), maps.labels[k]);
  write_text(out / "masses.txt", side);
  return side;
}

}  // namespace ltvit
