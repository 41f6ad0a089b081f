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
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "core/nn.hpp"

namespace ltvit {

struct ModelConfig {
  std::size_t image_height = 32;
  std::size_t image_width = 32;
  std::size_t channels = 1;
  std::size_t patch = 8;
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t depth = 6;
  // First n1 blocks see image tokens only; label tokens join for the last n2.
  std::size_t n1 = 2;
  std::size_t n2 = 4;
  std::size_t labels = 4;
  AttentionMode mode = AttentionMode::kOneWay;
  double dropout = 0.0;

  std::size_t grid_height() const { return image_height / patch; }
  std::size_t grid_width() const { return image_width / patch; }
  std::size_t num_patches() const { return grid_height() * grid_width(); }
  std::size_t patch_dim() const { return patch * patch * channels; }
  bool has_label_tokens() const { return mode != AttentionMode::kBaseline; }

  // Throws kConfig naming the first violated constraint.
  void validate() const;

  // ViT-S/16 at 224x224 with three channels.
  static ModelConfig vit_small(std::size_t labels);

  bool operator==(const ModelConfig&) const = default;
};

struct BlockParams {
  Tensor norm1_gamma, norm1_beta;
  Tensor qkv_weight, qkv_bias;
  Tensor proj_weight, proj_bias;
  Tensor norm2_gamma, norm2_beta;
  Tensor fc1_weight, fc1_bias;
  Tensor fc2_weight, fc2_bias;
};

struct LabelParams {
  Tensor tokens;       // c x D
  Tensor head_weight;  // c x D, row k is the head of label k
  Tensor head_bias;    // c
};

struct Parameters {
  Tensor patch_weight, patch_bias;
  Tensor pos_embedding;  // (n + 1) x D, row 0 belongs to CLS
  Tensor cls_token;      // 1 x D
  std::vector<BlockParams> blocks;
  Tensor norm_gamma, norm_beta;
  Tensor cls_head_weight, cls_head_bias;
  std::optional<LabelParams> label;  // absent in baseline mode

  // Calls fn(name, tensor) for every parameter in a fixed order.
  template <typename Fn>
  void visit(Fn&& fn) { visit_impl(*this, fn); }
  template <typename Fn>
  void visit(Fn&& fn) const { visit_impl(*this, fn); }

  std::size_t count() const;
  bool bitwise_equal(const Parameters& other) const;

 private:
  template <typename Self, typename Fn>
  static void visit_impl(Self& p, Fn& fn) {
    fn(std::string_view("patch_embed.weight"), p.patch_weight);
    fn(std::string_view("patch_embed.bias"), p.patch_bias);
    fn(std::string_view("pos_embed"), p.pos_embedding);
    fn(std::string_view("cls_token"), p.cls_token);
    for (std::size_t i = 0; i < p.blocks.size(); ++i) {
      auto& b = p.blocks[i];
      const std::string pre = "blocks." + std::to_string(i) + ".";
      fn(std::string_view(pre + "norm1.gamma"), b.norm1_gamma);
      fn(std::string_view(pre + "norm1.beta"), b.norm1_beta);
      fn(std::string_view(pre + "attn.qkv.weight"), b.qkv_weight);
      fn(std::string_view(pre + "attn.qkv.bias"), b.qkv_bias);
      fn(std::string_view(pre + "attn.proj.weight"), b.proj_weight);
      fn(std::string_view(pre + "attn.proj.bias"), b.proj_bias);
      fn(std::string_view(pre + "norm2.gamma"), b.norm2_gamma);
      fn(std::string_view(pre + "norm2.beta"), b.norm2_beta);
      fn(std::string_view(pre + "mlp.fc1.weight"), b.fc1_weight);
      fn(std::string_view(pre + "mlp.fc1.bias"), b.fc1_bias);
      fn(std::string_view(pre + "mlp.fc2.weight"), b.fc2_weight);
      fn(std::string_view(pre + "mlp.fc2.bias"), b.fc2_bias);
    }
    fn(std::string_view("norm.gamma"), p.norm_gamma);
    fn(std::string_view("norm.beta"), p.norm_beta);
    fn(std::string_view("cls_head.weight"), p.cls_head_weight);
    fn(std::string_view("cls_head.bias"), p.cls_head_bias);
    if (p.label) {
      fn(std::string_view("label_tokens"), p.label->tokens);
      fn(std::string_view("label_heads.weight"), p.label->head_weight);
      fn(std::string_view("label_heads.bias"), p.label->head_bias);
    }
  }
};

// Zero-filled parameters with the shapes the config implies.
Parameters allocate_parameters(const ModelConfig& config);
// Deterministic initialisation: each tensor draws from its own stream keyed
// by (seed, name), so shared tensors initialise identically across modes.
Parameters init_parameters(const ModelConfig& config, std::uint64_t seed);
void init_tensor(std::string_view name, Tensor& t, std::uint64_t seed);
// Closed-form count of the tensors allocate_parameters creates.
std::size_t parameter_count(const ModelConfig& config);

// image: H x W x C -> n x (p*p*C), patches in raster order.
Tensor patchify(const Tensor& image, std::size_t patch);
Tensor unpatchify(const Tensor& patches, std::size_t height, std::size_t width,
                  std::size_t channels, std::size_t patch);

struct BoundBlock {
  Var norm1_gamma, norm1_beta;
  AttentionWeights attn;
  Var norm2_gamma, norm2_beta;
  FfnWeights mlp;
};

struct BoundParameters {
  Var patch_weight, patch_bias, pos_embedding, cls_token;
  std::vector<BoundBlock> blocks;
  Var norm_gamma, norm_beta;
  Var cls_head_weight, cls_head_bias;
  std::optional<Var> label_tokens, head_weight, head_bias;
  // Every bound tensor, in Parameters::visit order.
  std::vector<Var> leaves;
};

// Gradients are deposited into the tensors on backward.
BoundParameters bind_parameters(Tape& tape, Parameters& params, std::size_t heads);
// Read-only binding; gradients stay on the tape and are read through
// BoundParameters::leaves. Safe for concurrent tapes over shared parameters.
BoundParameters bind_parameters_view(Tape& tape, const Parameters& params,
                                     std::size_t heads);

Var embed(Var patches, const BoundParameters& p);

// Logit k = head_weight[k] . y_final[k] + head_bias[k].
Var predict_heads(Var y_final, Var head_weight, Var head_bias);

struct BlockOptions {
  bool capture = false;
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;
};

struct BlockOutput {
  Var image;
  std::optional<Var> label;
  std::vector<HeadAttention> heads;
};

// Pre-norm block. With label rows present, both groups share the attention
// projection and the FFN; without them it is a standard ViT block.
BlockOutput lt_block(Var x, std::optional<Var> y, const BoundBlock& block,
                     AttentionMode mode, const BlockOptions& options = {});

struct AttentionRecord {
  static constexpr int kClsQuery = -1;
  std::size_t block = 0;
  std::size_t head = 0;
  int query = kClsQuery;  // label index, or kClsQuery
  std::vector<double> row;  // keys: CLS, patches, then labels if readable
};

struct AttentionTrace {
  bool enabled = false;
  std::size_t grid_height = 0, grid_width = 0;
  std::size_t labels = 0;
  // Blocks the extractors reduce over: the label-token blocks, or every
  // block for a baseline model.
  std::vector<std::size_t> reduce_blocks;
  std::vector<AttentionRecord> records;
};

struct ForwardOptions {
  bool capture_attention = false;
  bool training = false;  // enables dropout; requires rng when dropout > 0
  std::mt19937_64* rng = nullptr;
};

struct ForwardResult {
  Var logits;           // c
  Var cls_logits;       // c, from the CLS head
  Var image_tokens;     // (n + 1) x D after the last block
  std::optional<Var> label_tokens;  // c x D after the last block
  AttentionTrace trace;
};

ForwardResult forward(Tape& tape, const BoundParameters& params,
                      const Tensor& image, const ModelConfig& config,
                      const ForwardOptions& options = {});

}  // namespace ltvit
