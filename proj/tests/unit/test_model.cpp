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

#include <cmath>
#include <set>

#include "core/error.hpp"
#include "core/model.hpp"
#include "core/train.hpp"
#include "plain_vit.hpp"
#include "support.hpp"

using namespace ltvit;
using ltvit::testing::random_tensor;

namespace {

ModelConfig tiny(AttentionMode mode = AttentionMode::kOneWay) {
  ModelConfig c;
  c.image_height = c.image_width = 8;
  c.patch = 4;
  c.dim = 8;
  c.heads = 2;
  c.depth = 2;
  c.n1 = 1;
  c.n2 = 1;
  c.labels = 3;
  c.mode = mode;
  if (mode == AttentionMode::kBaseline) {
    c.n1 = 2;
    c.n2 = 0;
  }
  return c;
}

// Parameter count written out tensor by tensor.
std::size_t count_oracle(const ModelConfig& c) {
  const std::size_t d = c.dim, n = (c.image_height / c.patch) * (c.image_width / c.patch);
  std::size_t total = 0;
  total += c.patch * c.patch * c.channels * d;  // patch projection
  total += d;                                   // its bias
  total += (n + 1) * d;                         // positions
  total += d;                                   // CLS
  for (std::size_t b = 0; b < c.depth; ++b) {
    total += d + d;                  // norm1
    total += d * (3 * d) + 3 * d;    // qkv
    total += d * d + d;              // output projection
    total += d + d;                  // norm2
    total += d * (4 * d) + 4 * d;    // fc1
    total += (4 * d) * d + d;        // fc2
  }
  total += d + d;          // final norm
  total += d * c.labels;   // CLS head
  total += c.labels;
  if (c.mode != AttentionMode::kBaseline) {
    total += c.labels * d;  // label tokens
    total += c.labels * d;  // per-label head weights
    total += c.labels;      // per-label head biases
  }
  return total;
}

Tensor random_image(const ModelConfig& c, std::mt19937_64& rng) {
  return random_tensor({c.image_height, c.image_width, c.channels}, rng, 0.0, 1.0);
}

Parameters random_parameters(const ModelConfig& c, std::mt19937_64& rng) {
  Parameters p = allocate_parameters(c);
  p.visit([&](std::string_view, Tensor& t) {
    for (double& v : t.data()) v = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
  });
  return p;
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig c = tiny();
  CHECK_NOTHROW(c.validate());
  auto bad = [](ModelConfig m) {
    try {
      m.validate();
    } catch (const Error& e) {
      return e.kind() == ErrorKind::kConfig;
    }
    return false;
  };
  ModelConfig m = c;
  m.n1 = 2;
  CHECK(bad(m));
  m = c;
  m.patch = 3;
  CHECK(bad(m));
  m = c;
  m.heads = 3;
  CHECK(bad(m));
  m = c;
  m.mode = AttentionMode::kBaseline;  // n2 = 1
  CHECK(bad(m));
  m = tiny(AttentionMode::kBaseline);
  m.mode = AttentionMode::kOneWay;  // n2 = 0
  CHECK(bad(m));
  m = c;
  m.dropout = 1.0;
  CHECK(bad(m));
}

TEST_CASE("parameter count: closed form, allocation and tensor-by-tensor oracle agree") {
  for (AttentionMode mode : {AttentionMode::kOneWay, AttentionMode::kBaseline}) {
    ModelConfig c = tiny(mode);
    CHECK(parameter_count(c) == count_oracle(c));
    CHECK(allocate_parameters(c).count() == count_oracle(c));
  }
  ModelConfig d;  // desk-scale defaults
  CHECK(allocate_parameters(d).count() == count_oracle(d));
}

TEST_CASE("ViT-S parameter count and the label-token delta") {
  ModelConfig lt = ModelConfig::vit_small(14);
  ModelConfig base = lt;
  base.mode = AttentionMode::kBaseline;
  base.n1 = base.depth;
  base.n2 = 0;
  const std::size_t n_lt = parameter_count(lt), n_base = parameter_count(base);
  CHECK(n_base == count_oracle(base));
  CHECK(n_lt >= 21'000'000);
  CHECK(n_lt <= 23'000'000);
  CHECK(n_lt - n_base == 14 * 384 + 14 * (384 + 1));
}

TEST_CASE("initialisation is deterministic, per-tensor and truncated") {
  ModelConfig c;
  Parameters a = init_parameters(c, 7);
  Parameters b = init_parameters(c, 7);
  Parameters other = init_parameters(c, 8);
  CHECK(a.bitwise_equal(b));
  CHECK_FALSE(a.bitwise_equal(other));

  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  a.visit([&](std::string_view name, const Tensor& t) {
    const std::string s(name);
    if (s.ends_with(".bias") || s.ends_with(".beta")) {
      for (double v : t.data()) CHECK(v == 0.0);
    } else if (s.ends_with(".gamma")) {
      for (double v : t.data()) CHECK(v == 1.0);
    } else {
      for (double v : t.data()) {
        CHECK(std::abs(v) <= 0.04);
        sum += v;
        sq += v * v;
        ++n;
      }
    }
  });
  const double mean = sum / static_cast<double>(n);
  const double sd = std::sqrt(sq / static_cast<double>(n) - mean * mean);
  CHECK(std::abs(mean) < 1e-3);
  // A normal truncated at two standard deviations keeps about 88% of the
  // spread of the untruncated one.
  CHECK(sd == doctest::Approx(0.02 * 0.8796).epsilon(0.02));

  // Tensors shared between modes start identical.
  ModelConfig bc = c;
  bc.mode = AttentionMode::kBaseline;
  bc.n1 = bc.depth;
  bc.n2 = 0;
  Parameters base = init_parameters(bc, 7);
  CHECK(base.patch_weight.bitwise_equal(a.patch_weight));
  CHECK(base.blocks[3].qkv_weight.bitwise_equal(a.blocks[3].qkv_weight));
  CHECK_FALSE(base.label.has_value());
}

TEST_CASE("parameter names are unique and ordered") {
  Parameters p = allocate_parameters(tiny());
  std::vector<std::string> names;
  p.visit([&](std::string_view n, const Tensor&) { names.emplace_back(n); });
  CHECK(std::set<std::string>(names.begin(), names.end()).size() == names.size());
  CHECK(names.front() == "patch_embed.weight");
  CHECK(names.back() == "label_heads.bias");
  CHECK(names.size() == 4 + 2 * 12 + 4 + 3);
}

TEST_CASE("patchify is raster ordered and inverts") {
  Tensor img({4, 6, 2});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>(i);
  Tensor p = patchify(img, 2);
  CHECK(p.shape() == Shape{6, 8});
  // Patch (1, 2): rows 2..3, columns 4..5.
  for (std::size_t py = 0; py < 2; ++py)
    for (std::size_t px = 0; px < 2; ++px)
      for (std::size_t ch = 0; ch < 2; ++ch) {
        const double want = img[((2 + py) * 6 + (4 + px)) * 2 + ch];
        CHECK(p.at(5, (py * 2 + px) * 2 + ch) == want);
      }
  CHECK(unpatchify(p, 4, 6, 2, 2).bitwise_equal(img));
  CHECK_THROWS_AS(patchify(img, 4), Error);
}

TEST_CASE("forward output shapes") {
  std::mt19937_64 rng(21);
  for (AttentionMode mode : {AttentionMode::kOneWay, AttentionMode::kBaseline}) {
    ModelConfig c = tiny(mode);
    Parameters p = random_parameters(c, rng);
    Tape tape;
    ForwardResult r = forward(tape, bind_parameters_view(tape, p, c.heads), random_image(c, rng), c);
    CHECK(r.logits.shape() == Shape{3});
    CHECK(r.cls_logits.shape() == Shape{3});
    CHECK(r.image_tokens.shape() == Shape{5, 8});
    CHECK(r.label_tokens.has_value() == (mode != AttentionMode::kBaseline));
    if (mode == AttentionMode::kBaseline) CHECK(r.logits.id() == r.cls_logits.id());
  }
  ModelConfig c = tiny();
  Parameters p = random_parameters(c, rng);
  Tape tape;
  Tensor wrong({8, 8, 2});
  CHECK_THROWS_AS(forward(tape, bind_parameters_view(tape, p, c.heads), wrong, c), Error);
}

TEST_CASE("with n2 = 0 the model is a plain ViT, bit for bit") {
  std::mt19937_64 rng(22);
  ModelConfig c;
  c.mode = AttentionMode::kBaseline;
  c.n1 = c.depth;
  c.n2 = 0;
  Parameters p = random_parameters(c, rng);
  for (int i = 0; i < 5; ++i) {
    Tensor img = random_image(c, rng);
    Tape tape;
    Var ours = forward(tape, bind_parameters_view(tape, p, c.heads), img, c).logits;
    Var plain = ltvit::testing::plain_vit_logits(tape, p, img, c);
    CHECK(ours.tensor().bitwise_equal(plain.tensor()));
  }
}

TEST_CASE("label tokens never reach image tokens or the CLS head under one-way masking") {
  std::mt19937_64 rng(23);
  for (AttentionMode mode : {AttentionMode::kFullSelf, AttentionMode::kOneWay,
                             AttentionMode::kOneWayNoLabelSelf}) {
    CAPTURE(mode_name(mode));
    ModelConfig c;
    c.mode = mode;
    Parameters p = random_parameters(c, rng);
    Parameters q = p;
    q.label->tokens = random_tensor(q.label->tokens.shape(), rng, -10.0, 10.0);
    Tensor img = random_image(c, rng);
    Tape tape;
    ForwardResult a = forward(tape, bind_parameters_view(tape, p, c.heads), img, c);
    ForwardResult b = forward(tape, bind_parameters_view(tape, q, c.heads), img, c);
    const bool invariant = mode != AttentionMode::kFullSelf;
    CHECK(a.image_tokens.tensor().bitwise_equal(b.image_tokens.tensor()) == invariant);
    CHECK(a.cls_logits.tensor().bitwise_equal(b.cls_logits.tensor()) == invariant);
    CHECK_FALSE(a.logits.tensor().bitwise_equal(b.logits.tensor()));
  }
}

TEST_CASE("full-model gradients match finite differences on a tiny config") {
  std::mt19937_64 rng(24);
  for (AttentionMode mode : {AttentionMode::kFullSelf, AttentionMode::kOneWay,
                             AttentionMode::kOneWayNoLabelSelf, AttentionMode::kBaseline}) {
    CAPTURE(mode_name(mode));
    ModelConfig c = tiny(mode);
    Parameters p = random_parameters(c, rng);
    Tensor img = random_image(c, rng);
    Tensor targets = Tensor::vector({1.0, 0.0, 1.0});
    auto loss_of = [&](Parameters& params, bool grads) {
      Tape tape;
      BoundParameters bound = grads ? bind_parameters(tape, params, c.heads)
                                    : bind_parameters_view(tape, params, c.heads);
      Var loss = bce_with_logits(forward(tape, bound, img, c).logits, targets);
      if (grads) tape.backward(loss);
      return loss.value()[0];
    };
    loss_of(p, true);
    double worst = 0.0;
    p.visit([&](std::string_view name, Tensor& t) {
      double diff = 0.0, scale = 0.0;
      for (std::size_t i = 0; i < t.size(); ++i) {
        const double x0 = t[i];
        t[i] = x0 + 1e-6;
        const double up = loss_of(p, false);
        t[i] = x0 - 1e-6;
        const double down = loss_of(p, false);
        t[i] = x0;
        const double num = (up - down) / 2e-6;
        const double ana = t.has_grad() ? t.grad()[i] : 0.0;
        diff = std::max(diff, std::abs(num - ana));
        scale = std::max({scale, std::abs(num), std::abs(ana)});
      }
      const double rel = diff == 0.0 ? 0.0 : diff / scale;
      CAPTURE(name);
      CHECK(rel < 1e-5);
      worst = std::max(worst, rel);
    });
    MESSAGE("worst per-tensor relative error: " << worst);
  }
}

TEST_CASE("attention trace covers the label-token blocks") {
  std::mt19937_64 rng(25);
  ModelConfig c;
  Parameters p = random_parameters(c, rng);
  Tape tape;
  ForwardOptions opts;
  opts.capture_attention = true;
  ForwardResult r = forward(tape, bind_parameters_view(tape, p, c.heads), random_image(c, rng), c, opts);
  CHECK(r.trace.enabled);
  CHECK(r.trace.reduce_blocks == std::vector<std::size_t>{2, 3, 4, 5});
  CHECK(r.trace.records.size() == 4 * c.heads * (1 + c.labels));
  for (const auto& rec : r.trace.records) {
    double s = 0.0;
    for (double v : rec.row) s += v;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    // CLS reads the 17 image keys; label queries also read the 4 labels.
    CHECK(rec.row.size() == (rec.query == AttentionRecord::kClsQuery ? 17u : 21u));
  }
}

TEST_CASE("dropout only acts in training mode and follows the rng") {
  std::mt19937_64 rng(26);
  ModelConfig c;
  c.dropout = 0.2;
  Parameters p = random_parameters(c, rng);
  Tensor img = random_image(c, rng);
  Tape tape;
  auto bound = bind_parameters_view(tape, p, c.heads);
  Var eval1 = forward(tape, bound, img, c).logits;
  ModelConfig c0 = c;
  c0.dropout = 0.0;
  Var eval0 = forward(tape, bound, img, c0).logits;
  CHECK(eval1.tensor().bitwise_equal(eval0.tensor()));

  auto train_logits = [&](std::uint64_t seed) {
    std::mt19937_64 drop(seed);
    ForwardOptions o;
    o.training = true;
    o.rng = &drop;
    return forward(tape, bound, img, c, o).logits.tensor();
  };
  CHECK(train_logits(1).bitwise_equal(train_logits(1)));
  CHECK_FALSE(train_logits(1).bitwise_equal(train_logits(2)));
  CHECK_FALSE(train_logits(1).bitwise_equal(eval1.tensor()));
  ForwardOptions no_rng;
  no_rng.training = true;
  CHECK_THROWS_AS(forward(tape, bound, img, c, no_rng), Error);
}
