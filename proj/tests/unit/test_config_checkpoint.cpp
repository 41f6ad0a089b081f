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
#include <optional>

#include "core/checkpoint.hpp"
#include "core/config.hpp"
#include "core/error.hpp"

using namespace ltvit;

namespace {

template <typename F>
std::optional<ErrorKind> kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

RunConfig tiny() {
  RunConfig c;
  c.model.image_height = c.model.image_width = 16;
  c.model.patch = 8;
  c.model.dim = 8;
  c.model.heads = 2;
  c.model.depth = 2;
  c.model.n1 = 1;
  c.model.n2 = 1;
  c.model.labels = 3;
  return c;
}

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "ltvit_test_ckpt";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("config text round-trips") {
  RunConfig c = tiny();
  c.model.mode = AttentionMode::kOneWayNoLabelSelf;
  c.model.dropout = 0.1;
  c.schedule.adam.lr = 3e-4;
  c.schedule.cosine = false;
  c.schedule.seed = 123456789012345ULL;
  c.val_split = 1.0 / 3.0;
  c.data = "a/b.ltds";
  c.out = "runs/x";
  c.schedule.threads = 4;
  const std::string text = serialize_run_config(c);
  CHECK(parse_run_config(text) == c);
  CHECK(serialize_run_config(parse_run_config(text)) == text);

  RunConfig portable = parse_run_config(serialize_run_config(c, false));
  CHECK(portable.data.empty());
  CHECK(portable.schedule.threads == RunConfig{}.schedule.threads);
  CHECK(portable.model == c.model);
  CHECK(config_keys().size() >= 20);
}

TEST_CASE("config parsing: comments, whitespace, defaults") {
  RunConfig c = parse_run_config("# comment\n\n  dim = 64 # trailing\r\nmode=baseline\n");
  CHECK(c.model.dim == 64);
  CHECK(c.model.mode == AttentionMode::kBaseline);
  CHECK(c.model.heads == RunConfig{}.model.heads);
  CHECK(get_config_value(c, "dim") == "64");
  set_config_value(c, "lr", "0.5");
  CHECK(get_config_value(c, "lr") == "0.5");
}

TEST_CASE("config errors") {
  CHECK(kind_of([] { parse_run_config("bogus = 1"); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { parse_run_config("dim 64"); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { parse_run_config("dim = 64\ndim = 32"); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { parse_run_config("dim = -3"); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { parse_run_config("lr = fast"); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { parse_run_config("mode = twoway"); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { parse_run_config("lr_schedule = step"); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { get_config_value(RunConfig{}, "nope"); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { load_run_config(temp_path("missing.cfg")); }) == ErrorKind::kIo);
}

TEST_CASE("checkpoint save, load, save is a bitwise identity") {
  RunConfig c = tiny();
  Parameters p = init_parameters(c.model, 5);
  OptimState st;
  st.step = 17;
  p.visit([&](std::string_view, const Tensor& t) {
    st.m.emplace_back(t.size(), 0.125);
    st.v.emplace_back(t.size(), 1.0 / 3.0);
  });
  Checkpoint ck = make_checkpoint(c, p, &st);
  CHECK(ck.step == 17);
  const auto a = temp_path("a.ltck"), b = temp_path("b.ltck");
  save_checkpoint(ck, a);
  Checkpoint back = load_checkpoint(a);
  save_checkpoint(back, b);
  CHECK(read_bytes(a) == read_bytes(b));
  CHECK(back.config == ck.config);
  REQUIRE(back.optim.has_value());
  CHECK(back.optim->step == 17);
  CHECK(back.optim->v[0][0] == 1.0 / 3.0);

  Parameters q = parameters_from_checkpoint(back, c.model);
  std::size_t i = 0;
  q.visit([&](std::string_view name, const Tensor& t) {
    CHECK(name == back.tensors[i].first);
    CHECK(t.bitwise_equal(back.tensors[i].second));
    ++i;
  });
  // Stored as f32: a second trip through the model changes nothing.
  CHECK(encode_checkpoint(make_checkpoint(c, q)) ==
        encode_checkpoint(make_checkpoint(c, p)));
}

TEST_CASE("checkpoint decode errors") {
  RunConfig c = tiny();
  const auto bytes = encode_checkpoint(make_checkpoint(c, init_parameters(c.model, 1)));
  auto b = bytes;
  b[1] = 'X';
  CHECK(kind_of([&] { decode_checkpoint(b); }) == ErrorKind::kBadMagic);
  b = bytes;
  b[4] = 9;
  CHECK(kind_of([&] { decode_checkpoint(b); }) == ErrorKind::kBadVersion);
  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{5}, bytes.size() / 2,
                          bytes.size() - 1}) {
    b.assign(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
    CHECK(kind_of([&] { decode_checkpoint(b); }) == ErrorKind::kTruncated);
  }
  b = bytes;
  b.push_back(0);
  CHECK(kind_of([&] { decode_checkpoint(b); }) == ErrorKind::kFormat);
  b = bytes;
  b.back() = 7;  // optimizer flag
  CHECK(kind_of([&] { decode_checkpoint(b); }) == ErrorKind::kFormat);
  CHECK(kind_of([] { load_checkpoint(temp_path("missing.ltck")); }) == ErrorKind::kIo);
}

TEST_CASE("strict load rejects a different architecture") {
  RunConfig c = tiny();
  Checkpoint ck = make_checkpoint(c, init_parameters(c.model, 1));
  ModelConfig other = c.model;
  other.dim = 16;
  CHECK(kind_of([&] { parameters_from_checkpoint(ck, other); }) == ErrorKind::kConfig);
  other = c.model;
  other.dropout = 0.3;  // dropout is not part of the architecture
  CHECK_NOTHROW(parameters_from_checkpoint(ck, other));
  Checkpoint renamed = ck;
  renamed.tensors[1].first = "something.else";
  CHECK(kind_of([&] { parameters_from_checkpoint(renamed, c.model); }) == ErrorKind::kConfig);
}

TEST_CASE("transfer from a baseline checkpoint leaves label-token tensors fresh") {
  RunConfig base = tiny();
  base.model.mode = AttentionMode::kBaseline;
  base.model.n1 = 2;
  base.model.n2 = 0;
  Parameters bp = init_parameters(base.model, 2);
  Checkpoint ck = make_checkpoint(base, bp);

  ModelConfig target = tiny().model;
  TransferReport rep;
  Parameters tp = transfer_parameters(ck, target, 9, &rep);
  CHECK(std::find(rep.fresh.begin(), rep.fresh.end(), "label_tokens") != rep.fresh.end());
  CHECK(std::find(rep.loaded.begin(), rep.loaded.end(), "patch_embed.weight") != rep.loaded.end());
  Parameters fresh = init_parameters(target, 9);
  std::map<std::string, const Tensor*> src;
  for (const auto& [n, t] : ck.tensors) src[n] = &t;
  std::map<std::string, const Tensor*> init;
  fresh.visit([&](std::string_view n, const Tensor& t) { init[std::string(n)] = &t; });
  tp.visit([&](std::string_view n, const Tensor& t) {
    const bool loaded = std::find(rep.loaded.begin(), rep.loaded.end(), n) != rep.loaded.end();
    CHECK(t.bitwise_equal(loaded ? *src.at(std::string(n)) : *init.at(std::string(n))));
  });
  CHECK(rep.loaded.size() + rep.fresh.size() == init.size());

  ModelConfig wide = target;
  wide.dim = 16;
  CHECK(kind_of([&] { transfer_parameters(ck, wide, 9); }) == ErrorKind::kConfig);
}
