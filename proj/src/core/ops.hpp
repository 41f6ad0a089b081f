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

#include <random>
#include <span>
#include <vector>

#include "core/tape.hpp"

// Differentiable operations. Every op records itself on the tape of its
// first argument and carries a backward rule. Shapes must match exactly;
// the only broadcast is add_row_bias.
namespace ltvit {

Var matmul(Var a, Var b);
Var transpose(Var a);
Var reshape(Var a, Shape shape);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
// x[m x n] + bias[n] on every row.
Var add_row_bias(Var x, Var bias);

Var exp(Var a);
Var log(Var a);
Var sigmoid(Var a);
// tanh approximation.
Var gelu(Var a);

Var sum(Var a);
Var mean(Var a);
// Reduces the last dimension: [... x k] -> [...].
Var sum_lastdim(Var a);
Var softmax_lastdim(Var x);

// Concatenation and slicing along the first dimension.
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
// Concatenation and slicing along the second dimension of matrices.
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t end);

// Inverted dropout; identity when rate == 0.
Var dropout(Var x, double rate, std::mt19937_64& rng);

// Scalar helper used by the op implementations and by reference code.
double gelu_value(double x);

}  // namespace ltvit
