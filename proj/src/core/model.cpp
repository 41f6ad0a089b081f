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

#include "core/model.hpp"

#include <algorithm>

#include "core/error.hpp"

namespace ltvit {

void ModelConfig::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorKind::kConfig, what); };
  if (image_height == 0 || image_width == 0 || channels == 0)
    bad("image extents must be positive");
  if (patch == 0) bad("patch size must be positive");
  if (image_height % patch != 0 || image_width % patch != 0)
    bad("image " + std::to_string(image_height) + "x" +
        std::to_string(image_width) + " is not divisible by patch size " +
        std::to_string(patch));
  if (dim == 0 || heads == 0 || dim % heads != 0)
    bad("dim " + std::to_string(dim) + " is not divisible by " +
        std::to_string(heads) + " heads");
  if (n1 + n2 != depth)
    bad("n1 + n2 must equal depth (" + std::to_string(n1) + " + " +
        std::to_string(n2) + " != " + std::to_string(depth) + ")");
  if ((mode == AttentionMode::kBaseline) != (n2 == 0))
    bad("mode baseline is used exactly when n2 == 0 (mode " +
        std::string(mode_name(mode)) + ", n2 " + std::to_string(n2) + ")");
  if (labels == 0) bad("labels must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) bad("dropout must lie in [0, 1)");
}

ModelConfig ModelConfig::vit_small(std::size_t labels) {
  ModelConfig c;
  c.image_height = c.image_width = 224;
  c.channels = 3;
  c.patch = 16;
  c.dim = 384;
  c.heads = 6;
  c.depth = 12;
  c.n1 = 8;
  c.n2 = 4;
  c.labels = labels;
  return c;
}

std::size_t Parameters::count() const {
  std::size_t n = 0;
  visit([&](std::string_view, const Tensor& t) { n += t.size(); });
  return n;
}

bool Parameters::bitwise_equal(const Parameters& other) const {
  std::vector<const Tensor*> mine, theirs;
  visit([&](std::string_view, const Tensor& t) { mine.push_back(&t); });
  other.visit([&](std::string_view, const Tensor& t) { theirs.push_back(&t); });
  if (mine.size() != theirs.size()) return false;
  for (std::size_t i = 0; i < mine.size(); ++i)
    if (!mine[i]->bitwise_equal(*theirs[i])) return false;
  return true;
}

Parameters allocate_parameters(const ModelConfig& config) {
  config.validate();
  const std::size_t d = config.dim, c = config.labels, hidden = 4 * d;
  Parameters p;
  p.patch_weight = Tensor({config.patch_dim(), d});
  p.patch_bias = Tensor({d});
  p.pos_embedding = Tensor({config.num_patches() + 1, d});
  p.cls_token = Tensor({1, d});
  p.blocks.resize(config.depth);
  for (auto& b : p.blocks) {
    b.norm1_gamma = Tensor({d}, 1.0);
    b.norm1_beta = Tensor({d});
    b.qkv_weight = Tensor({d, 3 * d});
    b.qkv_bias = Tensor({3 * d});
    b.proj_weight = Tensor({d, d});
    b.proj_bias = Tensor({d});
    b.norm2_gamma = Tensor({d}, 1.0);
    b.norm2_beta = Tensor({d});
    b.fc1_weight = Tensor({d, hidden});
    b.fc1_bias = Tensor({hidden});
    b.fc2_weight = Tensor({hidden, d});
    b.fc2_bias = Tensor({d});
  }
  p.norm_gamma = Tensor({d}, 1.0);
  p.norm_beta = Tensor({d});
  p.cls_head_weight = Tensor({d, c});
  p.cls_head_bias = Tensor({c});
  if (config.has_label_tokens())
    p.label = LabelParams{Tensor({c, d}), Tensor({c, d}), Tensor({c})};
  p.visit([](std::string_view, Tensor& t) { t.set_requires_grad(true); });
  return p;
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() &&
         s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

void init_tensor(std::string_view name, Tensor& t, std::uint64_t seed) {
  if (ends_with(name, ".bias") || ends_with(name, ".beta")) {
    std::fill(t.data().begin(), t.data().end(), 0.0);
    return;
  }
  if (ends_with(name, ".gamma")) {
    std::fill(t.data().begin(), t.data().end(), 1.0);
    return;
  }
  const std::uint64_t key = fnv1a(name);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)};
  std::mt19937_64 rng(seq);
  constexpr double kStd = 0.02;
  std::normal_distribution<double> normal(0.0, kStd);
  for (double& v : t.data()) {
    double x;
    do {
      x = normal(rng);
    } while (x < -2.0 * kStd || x > 2.0 * kStd);
    v = x;
  }
}

Parameters init_parameters(const ModelConfig& config, std::uint64_t seed) {
  Parameters p = allocate_parameters(config);
  p.visit([&](std::string_view name, Tensor& t) { init_tensor(name, t, seed); });
  return p;
}

std::size_t parameter_count(const ModelConfig& config) {
  config.validate();
  const std::size_t d = config.dim, c = config.labels, n = config.num_patches();
  const std::size_t patch_embed = config.patch_dim() * d + d;
  const std::size_t tokens = (n + 1) * d + d;
  const std::size_t block = 2 * d                  // norm1
                            + d * 3 * d + 3 * d    // qkv
                            + d * d + d            // proj
                            + 2 * d                // norm2
                            + d * 4 * d + 4 * d    // fc1
                            + 4 * d * d + d;       // fc2
  const std::size_t head = 2 * d + d * c + c;     // final norm + CLS head
  std::size_t total = patch_embed + tokens + config.depth * block + head;
  if (config.has_label_tokens()) total += c * d + c * (d + 1);
  return total;
}

Tensor patchify(const Tensor& image, std::size_t patch) {
  if (image.rank() != 3)
    fail(ErrorKind::kDimension, "patchify: expected H x W x C, got " +
                                    shape_string(image.shape()));
  const std::size_t h = image.shape()[0], w = image.shape()[1], c = image.shape()[2];
  if (patch == 0 || h % patch != 0 || w % patch != 0)
    fail(ErrorKind::kDimension, "patchify: image " + shape_string(image.shape()) +
                                    " is not divisible by patch size " +
                                    std::to_string(patch));
  const std::size_t gh = h / patch, gw = w / patch, row = patch * patch * c;
  Tensor out({gh * gw, row});
  auto src = image.data();
  auto dst = out.data();
  for (std::size_t gy = 0; gy < gh; ++gy)
    for (std::size_t gx = 0; gx < gw; ++gx) {
      double* o = dst.data() + (gy * gw + gx) * row;
      for (std::size_t py = 0; py < patch; ++py) {
        const double* s = src.data() + ((gy * patch + py) * w + gx * patch) * c;
        std::copy_n(s, patch * c, o + py * patch * c);
      }
    }
  return out;
}

Tensor unpatchify(const Tensor& patches, std::size_t height, std::size_t width,
                  std::size_t channels, std::size_t patch) {
  if (patch == 0 || height % patch != 0 || width % patch != 0)
    fail(ErrorKind::kDimension, "unpatchify: extents not divisible by patch size");
  const std::size_t gh = height / patch, gw = width / patch;
  const std::size_t row = patch * patch * channels;
  if (patches.shape() != Shape{gh * gw, row})
    fail(ErrorKind::kDimension, "unpatchify: patches " +
                                    shape_string(patches.shape()) +
                                    " do not fit the image extents");
  Tensor out({height, width, channels});
  auto src = patches.data();
  auto dst = out.data();
  for (std::size_t gy = 0; gy < gh; ++gy)
    for (std::size_t gx = 0; gx < gw; ++gx) {
      const double* s = src.data() + (gy * gw + gx) * row;
      for (std::size_t py = 0; py < patch; ++py) {
        double* o = dst.data() + ((gy * patch + py) * width + gx * patch) * channels;
        std::copy_n(s + py * patch * channels, patch * channels, o);
      }
    }
  return out;
}

namespace {

template <typename ParamsT, typename BindFn>
BoundParameters bind_with(ParamsT& params, std::size_t heads, BindFn bind) {
  BoundParameters b;
  params.visit([&](std::string_view, auto& t) { b.leaves.push_back(bind(t)); });
  std::size_t i = 0;
  auto next = [&]() { return b.leaves[i++]; };
  b.patch_weight = next();
  b.patch_bias = next();
  b.pos_embedding = next();
  b.cls_token = next();
  for (std::size_t k = 0; k < params.blocks.size(); ++k) {
    BoundBlock blk;
    blk.norm1_gamma = next();
    blk.norm1_beta = next();
    blk.attn.qkv_weight = next();
    blk.attn.qkv_bias = next();
    blk.attn.out_weight = next();
    blk.attn.out_bias = next();
    blk.attn.heads = heads;
    blk.norm2_gamma = next();
    blk.norm2_beta = next();
    blk.mlp.w1 = next();
    blk.mlp.b1 = next();
    blk.mlp.w2 = next();
    blk.mlp.b2 = next();
    b.blocks.push_back(blk);
  }
  b.norm_gamma = next();
  b.norm_beta = next();
  b.cls_head_weight = next();
  b.cls_head_bias = next();
  if (params.label) {
    b.label_tokens = next();
    b.head_weight = next();
    b.head_bias = next();
  }
  return b;
}

}  // namespace

BoundParameters bind_parameters(Tape& tape, Parameters& params, std::size_t heads) {
  return bind_with(params, heads, [&](Tensor& t) { return tape.leaf(t); });
}

BoundParameters bind_parameters_view(Tape& tape, const Parameters& params,
                                     std::size_t heads) {
  return bind_with(params, heads, [&](const Tensor& t) {
    return tape.input(t, t.requires_grad());
  });
}

Var embed(Var patches, const BoundParameters& p) {
  Var projected = linear(patches, p.patch_weight, p.patch_bias);
  if (projected.rows() + 1 != p.pos_embedding.rows())
    fail(ErrorKind::kDimension, "embed: " + std::to_string(projected.rows()) +
                                    " patches do not match position table " +
                                    shape_string(p.pos_embedding.shape()));
  const Var rows[] = {p.cls_token, projected};
  return add(concat_rows(rows), p.pos_embedding);
}

Var predict_heads(Var y_final, Var head_weight, Var head_bias) {
  if (y_final.shape() != head_weight.shape())
    fail(ErrorKind::kDimension, "predict_heads: " + shape_string(y_final.shape()) +
                                    " label rows vs " +
                                    shape_string(head_weight.shape()) + " heads");
  if (head_bias.shape() != Shape{y_final.rows()})
    fail(ErrorKind::kDimension, "predict_heads: " + std::to_string(y_final.rows()) +
                                    " labels vs bias " +
                                    shape_string(head_bias.shape()));
  return add(sum_lastdim(mul(y_final, head_weight)), head_bias);
}

BlockOutput lt_block(Var x, std::optional<Var> y, const BoundBlock& block,
                     AttentionMode mode, const BlockOptions& options) {
  auto drop = [&](Var v) {
    if (options.dropout <= 0.0) return v;
    if (!options.rng) fail(ErrorKind::kContract, "lt_block: dropout needs an rng");
    return dropout(v, options.dropout, *options.rng);
  };

  Var nx = layer_norm(x, block.norm1_gamma, block.norm1_beta);
  std::optional<Var> ny;
  if (y) ny = layer_norm(*y, block.norm1_gamma, block.norm1_beta);
  AttentionResult att = combined_attention(nx, ny, block.attn, mode, options.capture);

  BlockOutput out;
  out.heads = std::move(att.heads);
  Var x1 = add(x, drop(att.image));
  if (!y) {
    Var h = ffn(layer_norm(x1, block.norm2_gamma, block.norm2_beta), block.mlp);
    out.image = add(x1, drop(h));
    return out;
  }
  Var y1 = add(*y, drop(*att.label));
  // One FFN over the stacked rows; every op below is row-wise, so image rows
  // never see label rows here either.
  const Var parts[] = {x1, y1};
  Var stacked = concat_rows(parts);
  Var h = ffn(layer_norm(stacked, block.norm2_gamma, block.norm2_beta), block.mlp);
  Var s2 = add(stacked, drop(h));
  const std::size_t nx_rows = x.rows();
  out.image = slice_rows(s2, 0, nx_rows);
  out.label = slice_rows(s2, nx_rows, nx_rows + y->rows());
  return out;
}

ForwardResult forward(Tape& tape, const BoundParameters& params,
                      const Tensor& image, const ModelConfig& config,
                      const ForwardOptions& options) {
  config.validate();
  if (image.shape() != Shape{config.image_height, config.image_width, config.channels})
    fail(ErrorKind::kDimension, "forward: image " + shape_string(image.shape()) +
                                    " does not match the model's " +
                                    std::to_string(config.image_height) + "x" +
                                    std::to_string(config.image_width) + "x" +
                                    std::to_string(config.channels));
  if (params.blocks.size() != config.depth)
    fail(ErrorKind::kConfig, "forward: parameters hold " +
                                 std::to_string(params.blocks.size()) +
                                 " blocks, config wants " + std::to_string(config.depth));
  if (config.has_label_tokens() != params.label_tokens.has_value())
    fail(ErrorKind::kConfig, "forward: label-token parameters do not match mode " +
                                 std::string(mode_name(config.mode)));

  BlockOptions block_opts;
  block_opts.capture = options.capture_attention;
  if (options.training) {
    block_opts.dropout = config.dropout;
    block_opts.rng = options.rng;
  }

  ForwardResult result;
  AttentionTrace& trace = result.trace;
  trace.enabled = options.capture_attention;
  trace.grid_height = config.grid_height();
  trace.grid_width = config.grid_width();
  trace.labels = config.has_label_tokens() ? config.labels : 0;
  const bool baseline = !config.has_label_tokens();
  auto keep = [&](std::size_t b, std::vector<HeadAttention>& heads) {
    if (!trace.enabled) return;
    const bool in_window = baseline || b >= config.n1;
    if (!in_window) return;
    trace.reduce_blocks.push_back(b);
    for (std::size_t h = 0; h < heads.size(); ++h) {
      const Tensor& img = heads[h].image;
      const std::size_t cols = img.row_size();
      AttentionRecord cls{b, h, AttentionRecord::kClsQuery,
                          std::vector<double>(img.data().begin(), img.data().begin() + cols)};
      trace.records.push_back(std::move(cls));
      if (!heads[h].label) continue;
      const Tensor& lbl = *heads[h].label;
      const std::size_t lcols = lbl.row_size();
      for (std::size_t k = 0; k < lbl.rows(); ++k) {
        auto begin = lbl.data().begin() + k * lcols;
        trace.records.push_back(AttentionRecord{b, h, static_cast<int>(k),
                                                std::vector<double>(begin, begin + lcols)});
      }
    }
  };

  Var x = embed(tape.constant(patchify(image, config.patch)), params);
  if (options.training && config.dropout > 0.0) {
    if (!options.rng) fail(ErrorKind::kContract, "forward: dropout needs an rng");
    x = dropout(x, config.dropout, *options.rng);
  }
  for (std::size_t b = 0; b < config.n1; ++b) {
    BlockOutput o = lt_block(x, std::nullopt, params.blocks[b], AttentionMode::kBaseline,
                             block_opts);
    x = o.image;
    keep(b, o.heads);
  }
  std::optional<Var> y;
  if (!baseline) y = *params.label_tokens;
  for (std::size_t b = config.n1; b < config.depth; ++b) {
    BlockOutput o = lt_block(x, y, params.blocks[b], config.mode, block_opts);
    x = o.image;
    y = o.label;
    keep(b, o.heads);
  }

  result.image_tokens = x;
  result.label_tokens = y;
  Var cls_final = layer_norm(slice_rows(x, 0, 1), params.norm_gamma, params.norm_beta);
  result.cls_logits = reshape(linear(cls_final, params.cls_head_weight, params.cls_head_bias),
                              Shape{config.labels});
  if (baseline) {
    result.logits = result.cls_logits;
  } else {
    Var y_final = layer_norm(*y, params.norm_gamma, params.norm_beta);
    result.logits = predict_heads(y_final, *params.head_weight, *params.head_bias);
  }
  return result;
}

}  // namespace ltvit
