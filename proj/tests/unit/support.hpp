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

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "core/ops.hpp"
#include "core/tape.hpp"
#include "core/tensor.hpp"

namespace ltvit::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = u(rng);
  return t;
}

// |a - b| / max(|a|, |b|, floor); zero when both are zero.
inline double rel_err(double a, double b, double floor = 1e-12) {
  const double d = std::abs(a - b);
  if (d == 0.0) return 0.0;
  return d / std::max({std::abs(a), std::abs(b), floor});
}

using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

inline double evaluate_scalar(const ScalarFn& f, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.input(t));
  return f(tape, vars).value()[0];
}

struct GradCheck {
  double max_rel = 0.0;         // element-wise
  double max_tensor_rel = 0.0;  // per input: max |a - n| / max(max |a|, max |n|)
  std::vector<std::vector<double>> analytic, numeric;
};

// Reverse-mode gradients of f against central differences.
inline GradCheck check_gradients(const ScalarFn& f, std::vector<Tensor> inputs,
                                 double eps = 1e-6, double floor = 1e-12) {
  GradCheck out;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& t : inputs) vars.push_back(tape.input(t, true));
    Var loss = f(tape, vars);
    tape.backward(loss);
    for (const auto& v : vars) {
      auto g = tape.grad(v);
      std::vector<double> copy(v.value().size(), 0.0);
      std::copy(g.begin(), g.end(), copy.begin());
      out.analytic.push_back(std::move(copy));
    }
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    std::vector<double> num(inputs[i].size());
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      const double x0 = inputs[i][j];
      inputs[i][j] = x0 + eps;
      const double up = evaluate_scalar(f, inputs);
      inputs[i][j] = x0 - eps;
      const double down = evaluate_scalar(f, inputs);
      inputs[i][j] = x0;
      num[j] = (up - down) / (2.0 * eps);
      out.max_rel = std::max(out.max_rel, rel_err(out.analytic[i][j], num[j], floor));
    }
    double diff = 0.0, scale = 0.0;
    for (std::size_t j = 0; j < num.size(); ++j) {
      diff = std::max(diff, std::abs(out.analytic[i][j] - num[j]));
      scale = std::max({scale, std::abs(out.analytic[i][j]), std::abs(num[j])});
    }
    if (diff > 0.0) out.max_tensor_rel = std::max(out.max_tensor_rel, diff / scale);
    out.numeric.push_back(std::move(num));
  }
  return out;
}

// Weighted sum with fixed pseudo-random weights, so every output element
// carries a distinct gradient.
inline Var probe(Var y, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  Tensor w = random_tensor(y.shape().empty() ? Shape{1} : y.shape(), rng);
  if (y.shape().empty()) return mul(y, y.tape().constant(Tensor::scalar(w[0])));
  return sum(mul(y, y.tape().constant(std::move(w))));
}

}  // namespace ltvit::testing
