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

#include "core/tensor.hpp"

#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

#include "core/error.hpp"

namespace ltvit {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
  for (auto extent : shape_)
    require(extent > 0, ErrorKind::kDimension,
            "tensor extents must be positive, got " + shape_string(shape_));
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto extent : shape_)
    require(extent > 0, ErrorKind::kDimension,
            "tensor extents must be positive, got " + shape_string(shape_));
  require(shape_size(shape_) == data_.size(), ErrorKind::kDimension,
          "shape " + shape_string(shape_) + " does not match " +
              std::to_string(data_.size()) + " elements");
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor(Shape{values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    require(row.size() == c, ErrorKind::kDimension, "ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(Shape{r, c}, std::move(data));
}

std::size_t Tensor::rows() const { return shape_.empty() ? 1 : shape_[0]; }

std::size_t Tensor::row_size() const {
  return shape_.empty() ? 1 : data_.size() / shape_[0];
}

std::span<double> Tensor::grad() {
  require(grad_.has_value(), ErrorKind::kContract, "tensor has no gradient");
  return *grad_;
}

std::span<const double> Tensor::grad() const {
  require(grad_.has_value(), ErrorKind::kContract, "tensor has no gradient");
  return *grad_;
}

std::span<double> Tensor::ensure_grad() {
  if (!grad_) grad_.emplace(data_.size(), 0.0);
  return *grad_;
}

void Tensor::zero_grad() { grad_.emplace(data_.size(), 0.0); }

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

bool Tensor::bitwise_equal(const Tensor& other) const {
  return shape_ == other.shape_ && data_.size() == other.data_.size() &&
         (data_.empty() ||
          std::memcmp(data_.data(), other.data_.data(),
                      data_.size() * sizeof(double)) == 0);
}

}  // namespace ltvit
