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

#include "core/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <json.hpp>

#include "core/error.hpp"
#include "core/parallel.hpp"

namespace ltvit {

Var bce_with_logits(Var logits, const Tensor& targets) {
  if (logits.shape() != targets.shape())
    fail(ErrorKind::kDimension, "bce_with_logits: logits " + shape_string(logits.shape()) +
                                    " vs targets " + shape_string(targets.shape()));
  auto z = logits.value();
  auto t = targets.data();
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (t[i] != 0.0 && t[i] != 1.0)
      fail(ErrorKind::kContract, "bce_with_logits: target " + std::to_string(t[i]) +
                                     " is not binary");
    total += std::max(z[i], 0.0) - z[i] * t[i] + std::log1p(std::exp(-std::abs(z[i])));
  }
  const double n = static_cast<double>(z.size());
  const auto zi = logits.id();
  std::vector<double> tv(t.begin(), t.end());
  return logits.tape().record(Shape{}, {total / n}, {logits},
                              [zi, n, tv = std::move(tv)](Tape& tape, std::uint32_t self) {
                                const double g = tape.out_grad(self)[0] / n;
                                auto z = tape.value(zi);
                                auto gz = tape.grad_buffer(zi);
                                for (std::size_t i = 0; i < z.size(); ++i) {
                                  const double p = z[i] >= 0
                                                       ? 1.0 / (1.0 + std::exp(-z[i]))
                                                       : std::exp(z[i]) / (1.0 + std::exp(z[i]));
                                  gz[i] += g * (p - tv[i]);
                                }
                              });
}

std::optional<double> auc(std::span<const double> scores,
                          std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size())
    fail(ErrorKind::kDimension, "auc: " + std::to_string(scores.size()) + " scores vs " +
                                    std::to_string(labels.size()) + " labels");
  std::size_t pos = 0;
  for (auto l : labels) {
    if (l > 1) fail(ErrorKind::kContract, "auc: labels must be 0 or 1");
    pos += l;
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) return std::nullopt;

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    // Ranks i+1 .. j share their mean.
    const double midrank = static_cast<double>(i + 1 + j) / 2.0;
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]]) rank_sum += midrank;
    i = j;
  }
  const double np = static_cast<double>(pos), nn = static_cast<double>(neg);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

std::vector<NamedTensor> named_tensors(Parameters& params) {
  std::vector<NamedTensor> out;
  params.visit([&](std::string_view name, Tensor& t) {
    out.push_back({std::string(name), &t});
  });
  return out;
}

void adam_step(std::span<const NamedTensor> params, OptimState& state, double lr) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor->size(), 0.0);
      state.v.emplace_back(p.tensor->size(), 0.0);
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size())
    fail(ErrorKind::kContract, "adam_step: optimizer state holds " +
                                   std::to_string(state.m.size()) + " tensors, got " +
                                   std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].tensor->has_grad())
      fail(ErrorKind::kContract, "adam_step: parameter '" + params[i].name + "' has no gradient");
    if (state.m[i].size() != params[i].tensor->size() ||
        state.v[i].size() != params[i].tensor->size())
      fail(ErrorKind::kContract, "adam_step: moment shape mismatch for '" + params[i].name + "'");
  }

  const AdamConfig& hp = state.hp;
  const double t = static_cast<double>(state.step + 1);
  const double c1 = 1.0 - std::pow(hp.beta1, t);
  const double c2 = 1.0 - std::pow(hp.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].tensor->data();
    auto g = params[i].tensor->grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g[j] + hp.weight_decay * w[j];
      m[j] = hp.beta1 * m[j] + (1.0 - hp.beta1) * gj;
      v[j] = hp.beta2 * v[j] + (1.0 - hp.beta2) * gj * gj;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      w[j] -= lr * mhat / (std::sqrt(vhat) + hp.eps);
    }
  }
  ++state.step;
}

void check_dataset_fits(const ModelConfig& config, const Dataset& ds) {
  if (ds.height != config.image_height || ds.width != config.image_width ||
      ds.channels != config.channels || ds.labels != config.labels)
    fail(ErrorKind::kConfig,
         "dataset is " + std::to_string(ds.height) + "x" + std::to_string(ds.width) + "x" +
             std::to_string(ds.channels) + " with " + std::to_string(ds.labels) +
             " labels, model expects " + std::to_string(config.image_height) + "x" +
             std::to_string(config.image_width) + "x" + std::to_string(config.channels) +
             " with " + std::to_string(config.labels) + " labels");
}

namespace {

Tensor targets_of(const Sample& s) {
  return Tensor({s.targets.size()}, std::vector<double>(s.targets.begin(), s.targets.end()));
}

}  // namespace

std::vector<double> predict_logits(const ModelConfig& config, const Parameters& params,
                                   const Dataset& ds, std::size_t threads) {
  check_dataset_fits(config, ds);
  std::vector<double> out(ds.size() * config.labels);
  parallel_for(ds.size(), threads, [&](std::size_t i) {
    Tape tape;
    auto bound = bind_parameters_view(tape, params, config.heads);
    ForwardResult r = forward(tape, bound, ds.image(i), config);
    auto z = r.logits.value();
    std::copy(z.begin(), z.end(), out.begin() + static_cast<std::ptrdiff_t>(i * config.labels));
  });
  return out;
}

EvalReport evaluate(const ModelConfig& config, const Parameters& params, const Dataset& ds,
                    std::size_t threads) {
  const std::vector<double> logits = predict_logits(config, params, ds, threads);
  const std::size_t c = config.labels;
  EvalReport report;
  report.samples = ds.size();
  double loss = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (std::size_t k = 0; k < c; ++k) {
      const double z = logits[i * c + k];
      const double t = ds.samples[i].targets[k];
      loss += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
    }
  report.loss = ds.size() ? loss / static_cast<double>(ds.size() * c) : 0.0;

  double sum = 0.0;
  std::size_t present = 0;
  std::vector<double> scores(ds.size());
  std::vector<std::uint8_t> labels(ds.size());
  for (std::size_t k = 0; k < c; ++k) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      scores[i] = logits[i * c + k];
      labels[i] = ds.samples[i].targets[k];
      pos += labels[i];
    }
    report.positives.push_back(pos);
    auto a = auc(scores, labels);
    report.auc.push_back(a);
    if (a) {
      sum += *a;
      ++present;
    } else {
      report.warnings.push_back("label " + std::to_string(k) +
                                " has only one class; skipped in macro AUC");
    }
  }
  if (present) report.macro_auc = sum / static_cast<double>(present);
  return report;
}

namespace {

nlohmann::ordered_json report_fields(const EvalReport& r) {
  nlohmann::ordered_json per_label = nlohmann::ordered_json::array();
  for (const auto& a : r.auc)
    per_label.push_back(a ? nlohmann::ordered_json(*a) : nlohmann::ordered_json());
  nlohmann::ordered_json j;
  j["samples"] = r.samples;
  j["loss"] = r.loss;
  j["macro_auc"] = r.macro_auc ? nlohmann::ordered_json(*r.macro_auc) : nlohmann::ordered_json();
  j["auc"] = per_label;
  j["positives"] = r.positives;
  j["warnings"] = r.warnings;
  return j;
}

}  // namespace

std::string to_json(const EvalReport& report) { return report_fields(report).dump(); }

std::string to_json(const EpochLog& log) {
  nlohmann::ordered_json j;
  j["epoch"] = log.epoch;
  j["step"] = log.step;
  j["loss"] = log.loss;
  j["lr"] = log.lr;
  if (log.eval) {
    nlohmann::json per_label = nlohmann::json::array();
    for (const auto& a : log.eval->auc)
      per_label.push_back(a ? nlohmann::json(*a) : nlohmann::json());
    j["auc"] = per_label;
    j["macro_auc"] = log.eval->macro_auc ? nlohmann::json(*log.eval->macro_auc) : nlohmann::json();
    j["val_loss"] = log.eval->loss;
  } else {
    j["auc"] = nullptr;
    j["macro_auc"] = nullptr;
  }
  return j.dump();
}

double scheduled_lr(const TrainSchedule& schedule, std::uint64_t step,
                    std::uint64_t total_steps) {
  const double base = schedule.adam.lr;
  if (step < schedule.warmup_steps)
    return base * static_cast<double>(step + 1) / static_cast<double>(schedule.warmup_steps);
  if (!schedule.cosine || total_steps <= schedule.warmup_steps) return base;
  const double frac = static_cast<double>(step - schedule.warmup_steps) /
                      static_cast<double>(total_steps - schedule.warmup_steps);
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

TrainResult train(const ModelConfig& config, Parameters params, const Dataset& train_set,
                  const Dataset* val_set, const TrainSchedule& schedule,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.size() == 0) fail(ErrorKind::kContract, "train: empty training set");
  check_dataset_fits(config, train_set);
  if (val_set) check_dataset_fits(config, *val_set);
  if (schedule.batch_size == 0) fail(ErrorKind::kContract, "train: batch_size must be >= 1");

  std::vector<NamedTensor> named = named_tensors(params);
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const auto& p : named) {
    offsets.push_back(total);
    total += p.tensor->size();
  }

  TrainResult result;
  result.state.hp = schedule.adam;
  const std::size_t batches_per_epoch =
      (train_set.size() + schedule.batch_size - 1) / schedule.batch_size;
  const std::uint64_t total_steps = batches_per_epoch * schedule.epochs;
  const std::uint64_t shuffle_stream = mix_seed(schedule.seed, 0x5348554646ULL);
  const std::uint64_t dropout_stream = mix_seed(schedule.seed, 0x44524f50ULL);

  constexpr std::size_t kChunk = 4;
  std::optional<double> best_auc;
  double best_loss = 0.0;
  result.best = params;

  for (std::size_t epoch = 1; epoch <= schedule.epochs; ++epoch) {
    const auto batches =
        batch_indices(train_set.size(), schedule.batch_size, mix_seed(shuffle_stream, epoch));
    double epoch_loss = 0.0;
    double lr = 0.0;
    for (const auto& batch : batches) {
      const std::uint64_t step = result.state.step;
      const std::size_t chunks = (batch.size() + kChunk - 1) / kChunk;
      std::vector<std::vector<double>> grads(chunks);
      std::vector<double> losses(chunks, 0.0);
      parallel_for(chunks, schedule.threads, [&](std::size_t ci) {
        auto& g = grads[ci];
        g.assign(total, 0.0);
        const std::size_t lo = ci * kChunk, hi = std::min(batch.size(), lo + kChunk);
        for (std::size_t b = lo; b < hi; ++b) {
          const std::size_t idx = batch[b];
          Tape tape;
          tape.set_deposit(false);
          auto bound = bind_parameters_view(tape, params, config.heads);
          std::mt19937_64 rng(mix_seed(mix_seed(dropout_stream, step), b));
          ForwardOptions opts;
          opts.training = true;
          opts.rng = &rng;
          ForwardResult r = forward(tape, bound, train_set.image(idx), config, opts);
          Var loss = bce_with_logits(r.logits, targets_of(train_set.samples[idx]));
          tape.backward(loss);
          losses[ci] += loss.value()[0];
          for (std::size_t p = 0; p < bound.leaves.size(); ++p) {
            auto lg = tape.grad(bound.leaves[p]);
            if (lg.empty()) continue;
            double* dst = g.data() + offsets[p];
            for (std::size_t j = 0; j < lg.size(); ++j) dst[j] += lg[j];
          }
        }
      });

      double batch_loss = 0.0;
      for (double l : losses) batch_loss += l;
      batch_loss /= static_cast<double>(batch.size());
      if (!std::isfinite(batch_loss))
        fail(ErrorKind::kNumeric, "non-finite training loss at epoch " + std::to_string(epoch) +
                                      ", step " + std::to_string(step));
      const double inv_b = 1.0 / static_cast<double>(batch.size());
      for (std::size_t p = 0; p < named.size(); ++p) {
        auto dst = named[p].tensor->ensure_grad();
        std::fill(dst.begin(), dst.end(), 0.0);
        for (std::size_t ci = 0; ci < chunks; ++ci) {
          const double* src = grads[ci].data() + offsets[p];
          for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
        }
        for (double& v : dst) v *= inv_b;
      }
      lr = scheduled_lr(schedule, step, total_steps);
      adam_step(named, result.state, lr);
      epoch_loss += batch_loss * static_cast<double>(batch.size());
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.step = result.state.step;
    entry.loss = epoch_loss / static_cast<double>(train_set.size());
    entry.lr = lr;
    if (val_set && val_set->size() > 0)
      entry.eval = evaluate(config, params, *val_set, schedule.threads);

    bool improved = false;
    if (entry.eval && entry.eval->macro_auc) {
      improved = !best_auc || *entry.eval->macro_auc > *best_auc;
      if (improved) best_auc = entry.eval->macro_auc;
    } else if (!best_auc) {
      improved = epoch == 1 || entry.loss < best_loss;
      if (improved) best_loss = entry.loss;
    }
    if (improved) {
      result.best = params;
      result.best_epoch = epoch;
    }
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry, params, result.state, improved);
  }
  for (auto& p : named) p.tensor->clear_grad();
  result.best.visit([](std::string_view, Tensor& t) { t.clear_grad(); });
  result.last = std::move(params);
  return result;
}

}  // namespace ltvit
