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
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "core/tensor.hpp"

namespace ltvit {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
// owning tape is alive and has not been reset.
class Var {
 public:
  Var() = default;

  Tape& tape() const { return *tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Shape& shape() const;
  std::span<const double> value() const;
  std::size_t rows() const;
  std::size_t cols() const;
  bool requires_grad() const;
  Tensor tensor() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

// Records one forward pass. Nodes are appended in execution order, so the
// node list is always topologically sorted. A tape is single-threaded;
// independent forward passes use independent tapes.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::uint32_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // View onto a caller-owned tensor (typically a parameter). The tensor must
  // outlive the tape. If the tensor requires grad and deposit is enabled,
  // backward() accumulates into tensor.grad().
  Var leaf(Tensor& t);
  // Read-only view; gradient, if requested, stays on the tape (see grad()).
  Var input(const Tensor& t, bool requires_grad = false);
  Var constant(Tensor t);

  // When disabled, leaf gradients remain on the tape and are never written
  // back to the tensors. Needed when several tapes share parameters.
  void set_deposit(bool on) { deposit_ = on; }
  // Debug flag: every recorded value is checked for NaN/Inf.
  void set_check_finite(bool on) { check_finite_ = on; }

  void backward(Var loss);
  bool backward_done() const { return backward_done_; }
  void reset();

  // Gradient of the last backward pass w.r.t. v; empty if v was unreachable.
  std::span<const double> grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  // Op-author interface.
  Var record(Shape shape, std::vector<double> value,
             std::initializer_list<Var> inputs, Backward backward);
  std::span<const double> value(std::uint32_t id) const;
  const Shape& shape(std::uint32_t id) const { return nodes_[id].shape; }
  bool needs_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  std::span<const double> out_grad(std::uint32_t id) const {
    return nodes_[id].grad;
  }
  // Gradient accumulator of an input node, zero-initialised on first use.
  std::span<double> grad_buffer(std::uint32_t id);

 private:
  struct Node {
    Shape shape;
    std::vector<double> owned;
    const double* view = nullptr;
    std::size_t view_size = 0;
    bool requires_grad = false;
    std::vector<double> grad;
    Backward backward;
    Tensor* sink = nullptr;
  };

  Var push(Node node);
  void check_owner(Var v) const;

  std::deque<Node> nodes_;
  bool deposit_ = true;
  bool check_finite_ = false;
  bool backward_done_ = false;
};

}  // namespace ltvit
