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

#include "core/ops.hpp"

#include <algorithm>
#include <cmath>

#include "core/error.hpp"

namespace ltvit {

namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

void check_same_shape(Var a, Var b, const char* op) {
  if (a.shape() != b.shape())
    fail(ErrorKind::kDimension, std::string(op) + ": shape mismatch " +
                                    shape_string(a.shape()) + " vs " +
                                    shape_string(b.shape()));
}

void check_matrix(Var a, const char* op) {
  if (a.shape().size() != 2)
    fail(ErrorKind::kDimension, std::string(op) + ": expected a matrix, got " +
                                    shape_string(a.shape()));
}

std::vector<double> copy_of(std::span<const double> v) {
  return std::vector<double>(v.begin(), v.end());
}

template <typename Fwd, typename Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
  auto x = a.value();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  const auto ai = a.id();
  return a.tape().record(
      a.shape(), std::move(out), {a}, [ai, deriv](Tape& t, std::uint32_t self) {
        auto g = t.out_grad(self);
        auto x = t.value(ai);
        auto y = t.value(self);
        auto ga = t.grad_buffer(ai);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(x[i], y[i]);
      });
}

// C (m x n) += A (m x k) B (k x n). Four output rows share each load of a B
// row; every element still accumulates over k in ascending order.
void gemm_acc(const double* __restrict a, const double* __restrict b, double* __restrict c,
              std::size_t m, std::size_t k, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    double* __restrict c0 = c + i * n;
    double* __restrict c1 = c0 + n;
    double* __restrict c2 = c1 + n;
    double* __restrict c3 = c2 + n;
    for (std::size_t p = 0; p < k; ++p) {
      const double a0 = a[i * k + p], a1 = a[(i + 1) * k + p];
      const double a2 = a[(i + 2) * k + p], a3 = a[(i + 3) * k + p];
      const double* __restrict brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        const double bj = brow[j];
        c0[j] += a0 * bj;
        c1[j] += a1 * bj;
        c2[j] += a2 * bj;
        c3[j] += a3 * bj;
      }
    }
  }
  for (; i < m; ++i) {
    double* __restrict row = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* __restrict brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
}

}  // namespace

double gelu_value(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
}

Var matmul(Var a, Var b) {
  check_matrix(a, "matmul");
  check_matrix(b, "matmul");
  if (a.shape()[1] != b.shape()[0])
    fail(ErrorKind::kDimension, "matmul: inner dimensions differ, " +
                                    shape_string(a.shape()) + " x " +
                                    shape_string(b.shape()));
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  auto A = a.value();
  auto B = b.value();
  std::vector<double> out(m * n, 0.0);
  gemm_acc(A.data(), B.data(), out.data(), m, k, n);
  const auto ai = a.id(), bi = b.id();
  return a.tape().record(
      {m, n}, std::move(out), {a, b},
      [ai, bi, m, k, n](Tape& t, std::uint32_t self) {
        auto g = t.out_grad(self);
        if (t.needs_grad(ai)) {
          auto ga = t.grad_buffer(ai);
          auto B = t.value(bi);
          std::vector<double> bt(k * n);
          for (std::size_t p = 0; p < k; ++p)
            for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = B[p * n + j];
          gemm_acc(g.data(), bt.data(), ga.data(), m, n, k);
        }
        if (t.needs_grad(bi)) {
          auto gb = t.grad_buffer(bi);
          auto A = t.value(ai);
          std::vector<double> at(m * k);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) at[p * m + i] = A[i * k + p];
          gemm_acc(at.data(), g.data(), gb.data(), k, m, n);
        }
      });
}

Var transpose(Var a) {
  check_matrix(a, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  auto x = a.value();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  const auto ai = a.id();
  return a.tape().record({n, m}, std::move(out), {a},
                         [ai, m, n](Tape& t, std::uint32_t self) {
                           auto g = t.out_grad(self);
                           auto ga = t.grad_buffer(ai);
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < n; ++j)
                               ga[i * n + j] += g[j * m + i];
                         });
}

Var reshape(Var a, Shape shape) {
  if (shape_size(shape) != a.value().size())
    fail(ErrorKind::kDimension, "reshape: cannot view " +
                                    shape_string(a.shape()) + " as " +
                                    shape_string(shape));
  const auto ai = a.id();
  return a.tape().record(std::move(shape), copy_of(a.value()), {a},
                         [ai](Tape& t, std::uint32_t self) {
                           auto g = t.out_grad(self);
                           auto ga = t.grad_buffer(ai);
                           for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                         });
}

Var add(Var a, Var b) {
  check_same_shape(a, b, "add");
  auto x = a.value(), y = b.value();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  const auto ai = a.id(), bi = b.id();
  return a.tape().record(a.shape(), std::move(out), {a, b},
                         [ai, bi](Tape& t, std::uint32_t self) {
                           auto g = t.out_grad(self);
                           for (auto id : {ai, bi}) {
                             if (!t.needs_grad(id)) continue;
                             auto gx = t.grad_buffer(id);
                             for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                           }
                         });
}

Var sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  auto x = a.value(), y = b.value();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  const auto ai = a.id(), bi = b.id();
  return a.tape().record(a.shape(), std::move(out), {a, b},
                         [ai, bi](Tape& t, std::uint32_t self) {
                           auto g = t.out_grad(self);
                           if (t.needs_grad(ai)) {
                             auto ga = t.grad_buffer(ai);
                             for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                           }
                           if (t.needs_grad(bi)) {
                             auto gb = t.grad_buffer(bi);
                             for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                           }
                         });
}

Var mul(Var a, Var b) {
  check_same_shape(a, b, "mul");
  auto x = a.value(), y = b.value();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  const auto ai = a.id(), bi = b.id();
  return a.tape().record(a.shape(), std::move(out), {a, b},
                         [ai, bi](Tape& t, std::uint32_t self) {
                           auto g = t.out_grad(self);
                           if (t.needs_grad(ai)) {
                             auto ga = t.grad_buffer(ai);
                             auto y = t.value(bi);
                             for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
                           }
                           if (t.needs_grad(bi)) {
                             auto gb = t.grad_buffer(bi);
                             auto x = t.value(ai);
                             for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
                           }
                         });
}

Var scale(Var a, double s) {
  auto x = a.value();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * s;
  const auto ai = a.id();
  return a.tape().record(a.shape(), std::move(out), {a},
                         [ai, s](Tape& t, std::uint32_t self) {
                           auto g = t.out_grad(self);
                           auto ga = t.grad_buffer(ai);
                           for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
                         });
}

Var add_row_bias(Var x, Var bias) {
  check_matrix(x, "add_row_bias");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (bias.value().size() != n || bias.shape().size() != 1)
    fail(ErrorKind::kDimension, "add_row_bias: bias " +
                                    shape_string(bias.shape()) +
                                    " does not fit rows of " +
                                    shape_string(x.shape()));
  auto v = x.value();
  auto b = bias.value();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = v[i * n + j] + b[j];
  const auto xi = x.id(), bi = bias.id();
  return x.tape().record({m, n}, std::move(out), {x, bias},
                         [xi, bi, m, n](Tape& t, std::uint32_t self) {
                           auto g = t.out_grad(self);
                           if (t.needs_grad(xi)) {
                             auto gx = t.grad_buffer(xi);
                             for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                           }
                           if (t.needs_grad(bi)) {
                             auto gb = t.grad_buffer(bi);
                             for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
                           }
                         });
}

Var exp(Var a) {
  return unary(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(
      a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Var sigmoid(Var a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var gelu(Var a) {
  return unary(a, gelu_value, [](double x, double) {
    const double u = kGeluC * (x + kGeluA * x * x * x);
    const double th = std::tanh(u);
    const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
    return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value()) s += v;
  const auto ai = a.id();
  return a.tape().record(Shape{}, {s}, {a}, [ai](Tape& t, std::uint32_t self) {
    const double g = t.out_grad(self)[0];
    for (double& v : t.grad_buffer(ai)) v += g;
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  double s = 0.0;
  for (double v : a.value()) s += v;
  const auto ai = a.id();
  return a.tape().record(Shape{}, {s / static_cast<double>(n)}, {a},
                         [ai, n](Tape& t, std::uint32_t self) {
                           const double g = t.out_grad(self)[0] / static_cast<double>(n);
                           for (double& v : t.grad_buffer(ai)) v += g;
                         });
}

Var sum_lastdim(Var a) {
  const Shape& in = a.shape();
  if (in.empty()) fail(ErrorKind::kDimension, "sum_lastdim: scalar input");
  const std::size_t k = in.back();
  const std::size_t outer = a.value().size() / k;
  Shape out_shape(in.begin(), in.end() - 1);
  auto x = a.value();
  std::vector<double> out(outer, 0.0);
  for (std::size_t r = 0; r < outer; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += x[r * k + j];
    out[r] = s;
  }
  const auto ai = a.id();
  return a.tape().record(std::move(out_shape), std::move(out), {a},
                         [ai, k, outer](Tape& t, std::uint32_t self) {
                           auto g = t.out_grad(self);
                           auto ga = t.grad_buffer(ai);
                           for (std::size_t r = 0; r < outer; ++r)
                             for (std::size_t j = 0; j < k; ++j) ga[r * k + j] += g[r];
                         });
}

Var softmax_lastdim(Var x) {
  const Shape& in = x.shape();
  if (in.empty() || in.back() < 1)
    fail(ErrorKind::kDimension, "softmax_lastdim: needs a last dimension");
  const std::size_t k = in.back();
  const std::size_t outer = x.value().size() / k;
  auto v = x.value();
  std::vector<double> out(v.size());
  for (std::size_t r = 0; r < outer; ++r) {
    const double* row = v.data() + r * k;
    double mx = row[0];
    for (std::size_t j = 0; j < k; ++j) {
      if (std::isnan(row[j]))
        fail(ErrorKind::kNumeric, "softmax_lastdim: NaN input");
      mx = std::max(mx, row[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      out[r * k + j] = std::exp(row[j] - mx);
      z += out[r * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) out[r * k + j] /= z;
  }
  const auto xi = x.id();
  return x.tape().record(in, std::move(out), {x},
                         [xi, k, outer](Tape& t, std::uint32_t self) {
                           auto g = t.out_grad(self);
                           auto y = t.value(self);
                           auto gx = t.grad_buffer(xi);
                           for (std::size_t r = 0; r < outer; ++r) {
                             double dot = 0.0;
                             for (std::size_t j = 0; j < k; ++j)
                               dot += g[r * k + j] * y[r * k + j];
                             for (std::size_t j = 0; j < k; ++j)
                               gx[r * k + j] += y[r * k + j] * (g[r * k + j] - dot);
                           }
                         });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) fail(ErrorKind::kContract, "concat_rows: no inputs");
  const Shape& first = parts[0].shape();
  if (first.empty()) fail(ErrorKind::kDimension, "concat_rows: scalar input");
  Shape out_shape = first;
  out_shape[0] = 0;
  std::vector<double> out;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size() || !std::equal(s.begin() + 1, s.end(), first.begin() + 1))
      fail(ErrorKind::kDimension, "concat_rows: incompatible shapes " +
                                      shape_string(first) + " and " +
                                      shape_string(s));
    if (&p.tape() != &parts[0].tape())
      fail(ErrorKind::kContract, "concat_rows: inputs on different tapes");
    out_shape[0] += s[0];
    auto v = p.value();
    out.insert(out.end(), v.begin(), v.end());
  }
  Tape& tape = parts[0].tape();
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> sizes;
  for (const Var& p : parts) {
    ids.push_back(p.id());
    sizes.push_back(p.value().size());
  }
  // record() only looks at the listed inputs for requires_grad, so pass the
  // first input that needs a gradient (if any).
  Var rep = parts[0];
  for (const Var& p : parts)
    if (p.requires_grad()) rep = p;
  return tape.record(std::move(out_shape), std::move(out), {rep},
                     [ids, sizes](Tape& t, std::uint32_t self) {
                       auto g = t.out_grad(self);
                       std::size_t off = 0;
                       for (std::size_t i = 0; i < ids.size(); ++i) {
                         if (t.needs_grad(ids[i])) {
                           auto gp = t.grad_buffer(ids[i]);
                           for (std::size_t j = 0; j < sizes[i]; ++j) gp[j] += g[off + j];
                         }
                         off += sizes[i];
                       }
                     });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  const Shape& in = a.shape();
  if (in.empty() || begin >= end || end > in[0])
    fail(ErrorKind::kDimension, "slice_rows: range [" + std::to_string(begin) +
                                    ", " + std::to_string(end) +
                                    ") invalid for " + shape_string(in));
  const std::size_t row = a.value().size() / in[0];
  Shape out_shape = in;
  out_shape[0] = end - begin;
  auto v = a.value();
  std::vector<double> out(v.begin() + begin * row, v.begin() + end * row);
  const auto ai = a.id();
  const std::size_t off = begin * row;
  return a.tape().record(std::move(out_shape), std::move(out), {a},
                         [ai, off](Tape& t, std::uint32_t self) {
                           auto g = t.out_grad(self);
                           auto ga = t.grad_buffer(ai);
                           for (std::size_t j = 0; j < g.size(); ++j) ga[off + j] += g[j];
                         });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) fail(ErrorKind::kContract, "concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  Var rep = parts[0];
  for (const Var& p : parts) {
    check_matrix(p, "concat_cols");
    if (p.shape()[0] != m)
      fail(ErrorKind::kDimension, "concat_cols: row counts differ, " +
                                      shape_string(parts[0].shape()) + " vs " +
                                      shape_string(p.shape()));
    if (&p.tape() != &parts[0].tape())
      fail(ErrorKind::kContract, "concat_cols: inputs on different tapes");
    ids.push_back(p.id());
    widths.push_back(p.shape()[1]);
    total += p.shape()[1];
    if (p.requires_grad()) rep = p;
  }
  std::vector<double> out(m * total);
  std::size_t col = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    auto v = parts[i].value();
    for (std::size_t r = 0; r < m; ++r)
      std::copy_n(v.data() + r * widths[i], widths[i], out.data() + r * total + col);
    col += widths[i];
  }
  return parts[0].tape().record(
      {m, total}, std::move(out), {rep},
      [ids, widths, m, total](Tape& t, std::uint32_t self) {
        auto g = t.out_grad(self);
        std::size_t col = 0;
        for (std::size_t i = 0; i < ids.size(); ++i) {
          if (t.needs_grad(ids[i])) {
            auto gp = t.grad_buffer(ids[i]);
            for (std::size_t r = 0; r < m; ++r)
              for (std::size_t j = 0; j < widths[i]; ++j)
                gp[r * widths[i] + j] += g[r * total + col + j];
          }
          col += widths[i];
        }
      });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  check_matrix(a, "slice_cols");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  if (begin >= end || end > n)
    fail(ErrorKind::kDimension, "slice_cols: range [" + std::to_string(begin) +
                                    ", " + std::to_string(end) +
                                    ") invalid for " + shape_string(a.shape()));
  const std::size_t w = end - begin;
  auto v = a.value();
  std::vector<double> out(m * w);
  for (std::size_t r = 0; r < m; ++r)
    std::copy_n(v.data() + r * n + begin, w, out.data() + r * w);
  const auto ai = a.id();
  return a.tape().record({m, w}, std::move(out), {a},
                         [ai, m, n, w, begin](Tape& t, std::uint32_t self) {
                           auto g = t.out_grad(self);
                           auto ga = t.grad_buffer(ai);
                           for (std::size_t r = 0; r < m; ++r)
                             for (std::size_t j = 0; j < w; ++j)
                               ga[r * n + begin + j] += g[r * w + j];
                         });
}

Var dropout(Var x, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) fail(ErrorKind::kContract, "dropout: rate must be < 1");
  const double keep = 1.0 - rate;
  std::bernoulli_distribution draw(keep);
  auto v = x.value();
  std::vector<double> mask(v.size());
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    mask[i] = draw(rng) ? 1.0 / keep : 0.0;
    out[i] = v[i] * mask[i];
  }
  const auto xi = x.id();
  return x.tape().record(x.shape(), std::move(out), {x},
                         [xi, mask = std::move(mask)](Tape& t, std::uint32_t self) {
                           auto g = t.out_grad(self);
                           auto gx = t.grad_buffer(xi);
                           for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
                         });
}

}  // namespace ltvit
