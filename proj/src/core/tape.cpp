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

#include "core/tape.hpp"

#include <cmath>

#include "core/error.hpp"

namespace ltvit {

const Shape& Var::shape() const { return tape_->shape(id_); }
std::span<const double> Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->needs_grad(id_); }

std::size_t Var::rows() const {
  const auto& s = shape();
  return s.empty() ? 1 : s[0];
}

std::size_t Var::cols() const {
  const auto& s = shape();
  return s.size() < 2 ? 1 : shape_size(s) / s[0];
}

Tensor Var::tensor() const {
  auto v = value();
  return Tensor(shape(), std::vector<double>(v.begin(), v.end()));
}

Var Tape::push(Node node) {
  if (check_finite_) {
    const double* p = node.view ? node.view : node.owned.data();
    const std::size_t n = node.view ? node.view_size : node.owned.size();
    for (std::size_t i = 0; i < n; ++i)
      if (!std::isfinite(p[i]))
        fail(ErrorKind::kNumeric, "non-finite value recorded at tape node " +
                                      std::to_string(nodes_.size()));
  }
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

void Tape::check_owner(Var v) const {
  if (!v.valid() || &v.tape() != this || v.id() >= nodes_.size())
    fail(ErrorKind::kContract, "variable does not belong to this tape");
}

Var Tape::leaf(Tensor& t) {
  Node n;
  n.shape = t.shape();
  n.view = t.data().data();
  n.view_size = t.size();
  n.requires_grad = t.requires_grad();
  n.sink = t.requires_grad() ? &t : nullptr;
  return push(std::move(n));
}

Var Tape::input(const Tensor& t, bool requires_grad) {
  Node n;
  n.shape = t.shape();
  n.view = t.data().data();
  n.view_size = t.size();
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

Var Tape::constant(Tensor t) {
  Node n;
  n.shape = t.shape();
  n.owned = std::move(t.storage());
  return push(std::move(n));
}

Var Tape::record(Shape shape, std::vector<double> value,
                 std::initializer_list<Var> inputs, Backward backward) {
  Node n;
  n.shape = std::move(shape);
  n.owned = std::move(value);
  for (const Var& in : inputs) {
    check_owner(in);
    n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

std::span<const double> Tape::value(std::uint32_t id) const {
  const Node& n = nodes_[id];
  if (n.view) return {n.view, n.view_size};
  return n.owned;
}

std::span<double> Tape::grad_buffer(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.view ? n.view_size : n.owned.size(), 0.0);
  return n.grad;
}

void Tape::backward(Var loss) {
  check_owner(loss);
  require(!backward_done_, ErrorKind::kContract,
          "backward already ran on this tape; reset it first");
  require(value(loss.id()).size() == 1, ErrorKind::kContract,
          "backward needs a scalar loss, got shape " +
              shape_string(shape(loss.id())));
  backward_done_ = true;
  if (!nodes_[loss.id()].requires_grad) return;

  grad_buffer(loss.id())[0] = 1.0;
  for (std::int64_t id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, static_cast<std::uint32_t>(id));
  }
  if (!deposit_) return;
  for (Node& n : nodes_) {
    if (!n.sink || n.grad.empty()) continue;
    auto g = n.sink->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  }
}

void Tape::reset() {
  nodes_.clear();
  backward_done_ = false;
}

std::span<const double> Tape::grad(Var v) const {
  check_owner(v);
  return nodes_[v.id()].grad;
}

}  // namespace ltvit
