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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "core/data.hpp"
#include "core/model.hpp"

namespace ltvit {

// Mean over all elements of max(z, 0) - z*t + log(1 + exp(-|z|)).
// targets must hold only 0 and 1 and match the logits' shape.
Var bce_with_logits(Var logits, const Tensor& targets);

// ROC AUC via the Mann-Whitney statistic with midranks for ties. Absent when
// either class is empty.
std::optional<double> auc(std::span<const double> scores,
                          std::span<const std::uint8_t> labels);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  bool operator==(const AdamConfig&) const = default;
};

struct OptimState {
  AdamConfig hp;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m, v;  // one pair per parameter tensor
};

struct NamedTensor {
  std::string name;
  Tensor* tensor = nullptr;
};

std::vector<NamedTensor> named_tensors(Parameters& params);

// One bias-corrected Adam update using each tensor's grad(). L2 weight
// decay is folded into the gradient. Throws kContract naming the first
// tensor without a gradient.
void adam_step(std::span<const NamedTensor> params, OptimState& state, double lr);

struct EvalReport {
  std::vector<std::optional<double>> auc;  // per label; absent if degenerate
  std::optional<double> macro_auc;          // mean over present per-label AUCs
  std::vector<std::size_t> positives;
  double loss = 0.0;
  std::size_t samples = 0;
  std::vector<std::string> warnings;
};

// Logits for every sample, row-major samples x labels.
std::vector<double> predict_logits(const ModelConfig& config, const Parameters& params,
                                   const Dataset& ds, std::size_t threads = 1);
EvalReport evaluate(const ModelConfig& config, const Parameters& params,
                    const Dataset& ds, std::size_t threads = 1);
// Single-line JSON object.
std::string to_json(const EvalReport& report);

// Throws kConfig when the dataset's extents or label count disagree with the
// model.
void check_dataset_fits(const ModelConfig& config, const Dataset& ds);

struct TrainSchedule {
  std::size_t epochs = 15;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  bool cosine = true;
  std::uint64_t warmup_steps = 100;  // linear ramp to lr before the cosine decay
  AdamConfig adam;
  std::size_t threads = 1;
};

struct EpochLog {
  std::size_t epoch = 0;
  std::uint64_t step = 0;
  double loss = 0.0;  // mean training loss over the epoch
  double lr = 0.0;    // learning rate of the epoch's last step
  std::optional<EvalReport> eval;
};

std::string to_json(const EpochLog& log);

struct TrainResult {
  Parameters last;
  Parameters best;
  std::size_t best_epoch = 0;
  OptimState state;
  std::vector<EpochLog> log;
};

// Called after every epoch with the current parameters; `improved` marks a
// new best (highest validation macro AUC, or lowest training loss without a
// validation set).
using EpochCallback = std::function<void(const EpochLog&, const Parameters&,
                                         const OptimState&, bool improved)>;

// Gradients are summed per fixed chunk of samples and the chunks are reduced
// in order, so results do not depend on the thread count.
TrainResult train(const ModelConfig& config, Parameters params, const Dataset& train_set,
                  const Dataset* val_set, const TrainSchedule& schedule,
                  const EpochCallback& on_epoch = {});

double scheduled_lr(const TrainSchedule& schedule, std::uint64_t step,
                    std::uint64_t total_steps);

}  // namespace ltvit
