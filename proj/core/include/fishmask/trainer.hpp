// SPDX-License-Identifier: Apache-2.0
#pragma once

// Masked minibatch SGD: the full gradient is computed each step and applied
// only at mask-selected coordinates; everything else stays bit-frozen.

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fishmask/data.hpp"
#include "fishmask/mask.hpp"
#include "fishmask/model.hpp"

namespace fishmask {

struct TrainConfig {
  double learning_rate = 0.1;
  std::size_t batch_size = 16;
  std::size_t epochs = 50;
  std::uint64_t seed = 0;
  std::size_t eval_every = 100;  // steps between metric records; 0 = final only
};

struct MetricRecord {
  std::size_t step = 0;
  double train_loss = 0.0;
  double eval_accuracy = 0.0;
  std::size_t params_changed_count = 0;
};

struct TrainMetrics {
  std::vector<MetricRecord> records;
};

struct TrainResult {
  ParamVector params;
  TrainMetrics metrics;
};

/// One SGD step: theta'[i] = theta[i] - lr * g[i] for i in the mask,
/// bit-identical theta elsewhere. mask == nullptr means a dense step.
ParamVector sgd_step_masked(const ModelSpec& spec, const ParamVector& params,
                            std::span<const LabeledExample> batch,
                            const SparseMask* mask, double learning_rate);

/// Seed-shuffled minibatch SGD for config.epochs. No mask = dense training.
/// Deterministic for a fixed (config, data).
TrainResult train(const ModelSpec& spec, const ParamVector& params0,
                  const Dataset& train_data, const Dataset& eval_data,
                  const std::optional<SparseMask>& mask,
                  const TrainConfig& config);

/// Fraction of examples whose argmax log-prob equals the label; argmax ties
/// resolve to the lowest class index.
double evaluate(const ModelSpec& spec, const ParamVector& params,
                const Dataset& data);

void write_metrics_csv(const TrainMetrics& metrics, std::ostream& os);

// Flat parameter file: magic, version, |theta|, little-endian float64 values.
void save_params(const ParamVector& params, const std::string& path);
ParamVector load_params(const std::string& path);

}  // namespace fishmask
