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

#include "core/nn.hpp"

#include <cmath>

#include "core/error.hpp"

namespace ltvit {

std::string_view mode_name(AttentionMode mode) {
  switch (mode) {
    case AttentionMode::kFullSelf: return "fullself";
    case AttentionMode::kOneWay: return "oneway";
    case AttentionMode::kOneWayNoLabelSelf: return "onewaynolabelself";
    case AttentionMode::kBaseline: return "baseline";
  }
  return "unknown";
}

std::optional<AttentionMode> parse_mode(std::string_view name) {
  for (auto m : {AttentionMode::kFullSelf, AttentionMode::kOneWay,
                 AttentionMode::kOneWayNoLabelSelf, AttentionMode::kBaseline})
    if (mode_name(m) == name) return m;
  return std::nullopt;
}

Var linear(Var x, Var weight, Var bias) {
  return add_row_bias(matmul(x, weight), bias);
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  if (x.shape().size() != 2)
    fail(ErrorKind::kDimension, "layer_norm: expected a matrix, got " +
                                    shape_string(x.shape()));
  const std::size_t m = x.shape()[0], d = x.shape()[1];
  if (gamma.value().size() != d || beta.value().size() != d)
    fail(ErrorKind::kDimension, "layer_norm: affine parameters " +
                                    shape_string(gamma.shape()) + "/" +
                                    shape_string(beta.shape()) +
                                    " do not match width " + std::to_string(d));
  if (!(eps > 0.0)) fail(ErrorKind::kContract, "layer_norm: eps must be > 0");

  auto v = x.value();
  auto g = gamma.value();
  auto b = beta.value();
  std::vector<double> out(m * d);
  std::vector<double> xhat(m * d);
  std::vector<double> inv_std(m);
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = v.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (row[j] - mu) * inv_std[r];
      out[r * d + j] = xhat[r * d + j] * g[j] + b[j];
    }
  }

  const auto xi = x.id(), gi = gamma.id(), bi = beta.id();
  Tape& tape = x.tape();
  Var rep = x;
  if (gamma.requires_grad()) rep = gamma;
  if (beta.requires_grad()) rep = beta;
  if (x.requires_grad()) rep = x;
  return tape.record(
      {m, d}, std::move(out), {rep},
      [xi, gi, bi, m, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape& t, std::uint32_t self) {
        auto dy = t.out_grad(self);
        auto gam = t.value(gi);
        if (t.needs_grad(gi)) {
          auto gg = t.grad_buffer(gi);
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t j = 0; j < d; ++j) gg[j] += dy[r * d + j] * xhat[r * d + j];
        }
        if (t.needs_grad(bi)) {
          auto gb = t.grad_buffer(bi);
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t j = 0; j < d; ++j) gb[j] += dy[r * d + j];
        }
        if (t.needs_grad(xi)) {
          auto gx = t.grad_buffer(xi);
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t r = 0; r < m; ++r) {
            double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = dy[r * d + j] * gam[j];
              mean_dxhat += dxh;
              mean_dxhat_xhat += dxh * xhat[r * d + j];
            }
            mean_dxhat *= inv_d;
            mean_dxhat_xhat *= inv_d;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = dy[r * d + j] * gam[j];
              gx[r * d + j] += inv_std[r] * (dxh - mean_dxhat -
                                             xhat[r * d + j] * mean_dxhat_xhat);
            }
          }
        }
      });
}

namespace {

struct HeadSlices {
  Var q, k, v;
};

HeadSlices head_slices(Var qkv, std::size_t head, std::size_t width,
                       std::size_t dim) {
  const std::size_t lo = head * width;
  return {slice_cols(qkv, lo, lo + width),
          slice_cols(qkv, dim + lo, dim + lo + width),
          slice_cols(qkv, 2 * dim + lo, 2 * dim + lo + width)};
}

struct Attended {
  Var out;
  Var probs;
};

Attended attend(Var q, Var keys, Var values, double scale_factor) {
  Var scores = scale(matmul(q, transpose(keys)), scale_factor);
  Var probs = softmax_lastdim(scores);
  return {matmul(probs, values), probs};
}

}  // namespace

AttentionResult combined_attention(Var x, std::optional<Var> y,
                                   const AttentionWeights& w,
                                   AttentionMode mode, bool capture) {
  if (x.shape().size() != 2)
    fail(ErrorKind::kDimension, "combined_attention: image tokens must be a matrix");
  const std::size_t dim = x.shape()[1];
  if (w.heads == 0 || dim % w.heads != 0)
    fail(ErrorKind::kConfig, "combined_attention: width " + std::to_string(dim) +
                                 " is not divisible by " +
                                 std::to_string(w.heads) + " heads");
  if (mode == AttentionMode::kBaseline && y)
    fail(ErrorKind::kContract, "combined_attention: label tokens given in baseline mode");
  if (mode != AttentionMode::kBaseline && !y)
    fail(ErrorKind::kContract, "combined_attention: label tokens required in mode " +
                                   std::string(mode_name(mode)));
  if (y && (y->shape().size() != 2 || y->shape()[1] != dim))
    fail(ErrorKind::kDimension, "combined_attention: label tokens " +
                                    shape_string(y->shape()) +
                                    " do not match width " + std::to_string(dim));

  const std::size_t width = dim / w.heads;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(width));

  // The projection is row-wise, so projecting the two groups separately is
  // the same product as projecting their concatenation.
  Var qkv_x = linear(x, w.qkv_weight, w.qkv_bias);
  std::optional<Var> qkv_y;
  if (y) qkv_y = linear(*y, w.qkv_weight, w.qkv_bias);

  const bool image_reads_labels = mode == AttentionMode::kFullSelf;
  const bool label_reads_labels =
      mode == AttentionMode::kFullSelf || mode == AttentionMode::kOneWay;

  AttentionResult result;
  std::vector<Var> image_heads, label_heads;
  for (std::size_t h = 0; h < w.heads; ++h) {
    HeadSlices xs = head_slices(qkv_x, h, width, dim);
    std::optional<HeadSlices> ys;
    if (qkv_y) ys = head_slices(*qkv_y, h, width, dim);

    Var all_k = xs.k, all_v = xs.v;
    if (ys) {
      const Var ks[] = {xs.k, ys->k};
      const Var vs[] = {xs.v, ys->v};
      all_k = concat_rows(ks);
      all_v = concat_rows(vs);
    }

    Attended img = image_reads_labels ? attend(xs.q, all_k, all_v, scale_factor)
                                      : attend(xs.q, xs.k, xs.v, scale_factor);
    image_heads.push_back(img.out);
    HeadAttention captured;
    if (capture) captured.image = img.probs.tensor();

    if (ys) {
      Attended lbl = label_reads_labels ? attend(ys->q, all_k, all_v, scale_factor)
                                        : attend(ys->q, xs.k, xs.v, scale_factor);
      label_heads.push_back(lbl.out);
      if (capture) captured.label = lbl.probs.tensor();
    }
    if (capture) result.heads.push_back(std::move(captured));
  }

  result.image = linear(concat_cols(image_heads), w.out_weight, w.out_bias);
  if (y) result.label = linear(concat_cols(label_heads), w.out_weight, w.out_bias);
  return result;
}

Var ffn(Var x, const FfnWeights& w) {
  return linear(gelu(linear(x, w.w1, w.b1)), w.w2, w.b2);
}

}  // namespace ltvit
