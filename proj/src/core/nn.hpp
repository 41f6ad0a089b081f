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

#include <optional>
#include <string_view>
#include <vector>

#include "core/ops.hpp"

namespace ltvit {

// Which keys each query group may read inside a label-token block.
//
//   mode               image queries     label queries
//   kFullSelf          image + label     image + label
//   kOneWay            image             image + label
//   kOneWayNoLabelSelf image             image
//   kBaseline          image             (no label tokens)
//
// The CLS token is an image token throughout.
enum class AttentionMode { kFullSelf, kOneWay, kOneWayNoLabelSelf, kBaseline };

std::string_view mode_name(AttentionMode mode);
std::optional<AttentionMode> parse_mode(std::string_view name);

Var linear(Var x, Var weight, Var bias);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-6);

struct AttentionWeights {
  Var qkv_weight;  // D x 3D, shared by image and label tokens
  Var qkv_bias;    // 3D
  Var out_weight;  // D x D
  Var out_bias;    // D
  std::size_t heads = 1;
};

// Softmax rows of one head. Columns follow key order: image keys first
// (CLS, then patches), then label keys when the query group may read them.
struct HeadAttention {
  Tensor image;
  std::optional<Tensor> label;
};

struct AttentionResult {
  Var image;
  std::optional<Var> label;
  std::vector<HeadAttention> heads;  // filled only when capture is requested
};

// Multi-head attention over the image rows x and optional label rows y.
// Masking is done by restricting each query group's key set, so keys a
// group may not read never enter its arithmetic.
AttentionResult combined_attention(Var x, std::optional<Var> y,
                                   const AttentionWeights& w,
                                   AttentionMode mode, bool capture = false);

struct FfnWeights {
  Var w1, b1;  // D x 4D, 4D
  Var w2, b2;  // 4D x D, D
};

Var ffn(Var x, const FfnWeights& w);

}  // namespace ltvit
