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

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "core/data.hpp"
#include "core/error.hpp"
#include "core/run.hpp"

using namespace ltvit;
namespace fs = std::filesystem;

namespace {

RunConfig tiny() {
  RunConfig c;
  c.model.image_height = c.model.image_width = 16;
  c.model.patch = 4;
  c.model.dim = 16;
  c.model.heads = 2;
  c.model.depth = 2;
  c.model.n1 = 1;
  c.model.n2 = 1;
  c.schedule.epochs = 2;
  c.schedule.batch_size = 8;
  c.val_split = 0.25;
  return c;
}

Dataset tiny_data(std::size_t n, std::uint64_t seed) {
  SyntheticConfig s;
  s.height = s.width = 16;
  return generate_synthetic(n, seed, s);
}

fs::path fresh_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / "ltvit_test_run" / name;
  fs::remove_all(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("run_training writes its artefacts and is reproducible") {
  RunConfig c = tiny();
  Dataset d = tiny_data(24, 1);
  const auto a = fresh_dir("a"), b = fresh_dir("b");
  std::vector<std::string> lines;
  RunResult r = run_training(c, d, nullptr, a, [&](std::string_view l) { lines.emplace_back(l); });
  run_training(c, d, nullptr, b);
  for (const char* f : {"config.txt", "train.log", "best.ltck", "last.ltck"}) {
    CHECK(fs::exists(a / f));
    CHECK(slurp(a / f) == slurp(b / f));
  }
  CHECK(parse_run_config(slurp(a / "config.txt")) == c);
  std::istringstream log(slurp(a / "train.log"));
  std::string line;
  std::size_t epochs = 0;
  while (std::getline(log, line)) {
    auto j = nlohmann::json::parse(line);
    CHECK(j["epoch"] == ++epochs);
    CHECK(j.contains("val_loss"));
  }
  CHECK(epochs == 2);
  CHECK(r.train.log.size() == 2);
  CHECK(load_checkpoint(a / "last.ltck").optim.has_value());
  CHECK_FALSE(load_checkpoint(a / "best.ltck").optim.has_value());
  CHECK(r.fresh.empty());
}

TEST_CASE("run_training starts from a checkpoint and reports fresh tensors") {
  RunConfig base = tiny();
  base.model.mode = AttentionMode::kBaseline;
  base.model.n1 = 2;
  base.model.n2 = 0;
  Dataset d = tiny_data(24, 2);
  const auto src = fresh_dir("src"), dst = fresh_dir("dst");
  run_training(base, d, nullptr, src);
  RunConfig c = tiny();
  c.init = (src / "best.ltck").string();
  std::vector<std::string> lines;
  RunResult r = run_training(c, d, nullptr, dst, [&](std::string_view l) { lines.emplace_back(l); });
  CHECK(std::find(r.fresh.begin(), r.fresh.end(), "label_tokens") != r.fresh.end());
  bool announced = false;
  for (const auto& l : lines) announced |= l.find("label tokens") != std::string::npos;
  CHECK(announced);
  c.init = (src / "absent.ltck").string();
  CHECK_THROWS_AS(run_training(c, d, nullptr, fresh_dir("x")), Error);
}

TEST_CASE("run_training validates its inputs") {
  RunConfig c = tiny();
  c.model.n1 = 2;  // n1 + n2 != depth
  CHECK_THROWS_AS(run_training(c, tiny_data(8, 3), nullptr, fresh_dir("bad")), Error);
  c = tiny();
  CHECK_THROWS_AS(run_training(c, generate_synthetic(8, 3, {}), nullptr, fresh_dir("bad")), Error);
  c.val_split = 1.0;
  CHECK_THROWS_AS(run_training(c, tiny_data(8, 3), nullptr, fresh_dir("bad")), Error);
}

TEST_CASE("ablation configs") {
  RunConfig c = tiny();
  c.model.depth = 6;
  c.model.n1 = 6;
  c.model.n2 = 0;
  c.model.mode = AttentionMode::kBaseline;
  c.init = "x.ltck";
  RunConfig lt = ablation_config(c, AttentionMode::kOneWay);
  CHECK(lt.model.n2 == 4);
  CHECK(lt.model.n1 == 2);
  CHECK(lt.init.empty());
  RunConfig back = ablation_config(lt, AttentionMode::kBaseline);
  CHECK(back.model.n1 == 6);
  CHECK(back.model.n2 == 0);
  CHECK(ablation_config(lt, AttentionMode::kFullSelf).model.n2 == 4);
}

TEST_CASE("mode lists") {
  CHECK(parse_mode_list("all").size() == 4);
  auto two = parse_mode_list("baseline,oneway");
  REQUIRE(two.size() == 2);
  CHECK(two[0] == AttentionMode::kBaseline);
  CHECK_THROWS_AS(parse_mode_list("oneway,oneway"), Error);
  CHECK_THROWS_AS(parse_mode_list("sideways"), Error);
  CHECK_THROWS_AS(parse_mode_list(""), Error);
}

TEST_CASE("ablation table layout") {
  std::vector<AblationRow> rows{{AttentionMode::kOneWay, 0.91234, 3, 1.0},
                                {AttentionMode::kBaseline, std::nullopt, 0, 2.0}};
  const std::string t = format_ablation_table(rows);
  CHECK(t.find("mode") == 0);
  CHECK(t.find("oneway") != std::string::npos);
  CHECK(t.find("0.9123") != std::string::npos);
  CHECK(t.find("n/a") != std::string::npos);
}

TEST_CASE("run_ablation trains each mode in its own directory") {
  RunConfig c = tiny();
  c.schedule.epochs = 1;
  Dataset d = tiny_data(24, 4);
  const auto out = fresh_dir("abl");
  std::vector<AttentionMode> modes{AttentionMode::kOneWay, AttentionMode::kBaseline};
  auto rows = run_ablation(c, d, nullptr, modes, out);
  REQUIRE(rows.size() == 2);
  CHECK(fs::exists(out / "oneway" / "best.ltck"));
  CHECK(fs::exists(out / "baseline" / "best.ltck"));
  CHECK(slurp(out / "ablation.txt") == format_ablation_table(rows));
  CHECK(load_checkpoint(out / "baseline" / "best.ltck").config.model.n2 == 0);
  c.val_split = 0.0;
  CHECK_THROWS_AS(run_ablation(c, d, nullptr, modes, fresh_dir("abl2")), Error);
}

TEST_CASE("run_attnmap writes heatmaps and a side-car whose masses sum to one") {
  RunConfig c = tiny();
  Dataset d = tiny_data(4, 5);
  Checkpoint ck = make_checkpoint(c, init_parameters(c.model, 0));
  const auto out = fresh_dir("attn");
  AttnmapRequest req;
  req.sample = 1;
  const std::string side = run_attnmap(ck, d, req, out);
  CHECK(side == slurp(out / "masses.txt"));
  for (const char* f : {"cls.pgm", "lbl_0.pgm", "lbl_3.pgm"}) {
    const std::string pgm = slurp(out / f);
    CHECK(pgm.rfind("P5\n16 16\n255\n", 0) == 0);
    CHECK(pgm.size() == 13 + 256);
  }
  std::istringstream in(side);
  std::string line;
  std::map<std::string, double> sums;
  while (std::getline(in, line)) {
    const auto dot = line.find(".q");
    if (dot == std::string::npos) continue;
    sums[line.substr(0, dot)] += std::stod(line.substr(line.find('=') + 1));
  }
  CHECK(sums.size() == 5);
  for (const auto& [k, v] : sums) CHECK(std::abs(v - 1.0) < 1e-9);

  req.label = 2;
  const auto one = fresh_dir("attn1");
  run_attnmap(ck, d, req, one);
  CHECK(fs::exists(one / "lbl_2.pgm"));
  CHECK_FALSE(fs::exists(one / "lbl_0.pgm"));
  req.label = 4;
  CHECK_THROWS_AS(run_attnmap(ck, d, req, fresh_dir("attn2")), Error);
  req.label.reset();
  req.sample = 4;
  CHECK_THROWS_AS(run_attnmap(ck, d, req, fresh_dir("attn2")), Error);

  RunConfig b = tiny();
  b.model.mode = AttentionMode::kBaseline;
  b.model.n1 = 2;
  b.model.n2 = 0;
  Checkpoint bk = make_checkpoint(b, init_parameters(b.model, 0));
  req.sample = 0;
  CHECK_NOTHROW(run_attnmap(bk, d, req, fresh_dir("attn3")));
  req.label = 0;
  CHECK_THROWS_AS(run_attnmap(bk, d, req, fresh_dir("attn4")), Error);
}
