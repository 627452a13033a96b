// SPDX-License-Identifier: Apache-2.0
#include "fishmask/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

#include "fishmask/errors.hpp"
#include "fishmask/io.hpp"
#include "fishmask/rng.hpp"

namespace fishmask {

namespace {

void apply_update(ParamVector& params, const std::vector<double>& grad,
                  const SparseMask* mask, double lr) {
  if (mask) {
    for (std::size_t i : mask->indices) params[i] -= lr * grad[i];
  } else {
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
  }
}

std::size_t count_changed(const ParamVector& now, const ParamVector& initial) {
  std::size_t changed = 0;
  for (std::size_t i = 0; i < now.size(); ++i) {
    if (std::memcmp(&now[i], &initial[i], sizeof(double)) != 0) ++changed;
  }
  return changed;
}

}  // namespace

ParamVector sgd_step_masked(const ModelSpec& spec, const ParamVector& params,
                            std::span<const LabeledExample> batch,
                            const SparseMask* mask, double learning_rate) {
  if (mask && !mask->indices.empty() &&
      mask->indices.back() >= spec.param_count) {
    throw ConfigError("mask index out of range for this model");
  }
  const LossGrad lg = loss_and_grad(spec, params, batch);
  ParamVector updated = params;
  apply_update(updated, lg.grad, mask, learning_rate);
  return updated;
}

TrainResult train(const ModelSpec& spec, const ParamVector& params0,
                  const Dataset& train_data, const Dataset& eval_data,
                  const std::optional<SparseMask>& mask,
                  const TrainConfig& config) {
  if (train_data.size() == 0 || eval_data.size() == 0) {
    throw ConfigError("train: datasets must be nonempty");
  }
  if (config.learning_rate <= 0.0 || config.batch_size == 0) {
    throw ConfigError("train: learning_rate and batch_size must be positive");
  }
  const SparseMask* mask_ptr = mask ? &*mask : nullptr;

  TrainResult result;
  result.params = params0;
  auto shuffle_rng = make_rng(config.seed, Stream::kTrainShuffle);
  std::vector<std::size_t> order(train_data.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<LabeledExample> batch;
  std::size_t step = 0;
  double last_loss = 0.0;

  auto record = [&]() {
    MetricRecord rec;
    rec.step = step;
    rec.train_loss = last_loss;
    rec.eval_accuracy = evaluate(spec, result.params, eval_data);
    rec.params_changed_count = count_changed(result.params, params0);
    result.metrics.records.push_back(rec);
  };

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < order.size();
         start += config.batch_size) {
      const std::size_t stop =
          std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t n = start; n < stop; ++n) {
        batch.push_back(train_data.examples[order[n]]);
      }
      const LossGrad lg = loss_and_grad(spec, result.params, batch);
      if (!std::isfinite(lg.loss)) {
        throw NumericError("non-finite training loss at step " +
                           std::to_string(step));
      }
      apply_update(result.params, lg.grad, mask_ptr, config.learning_rate);
      last_loss = lg.loss;
      ++step;
      if (config.eval_every > 0 && step % config.eval_every == 0) record();
    }
  }
  // Always close with a final record.
  if (result.metrics.records.empty() ||
      result.metrics.records.back().step != step) {
    record();
  }
  return result;
}

double evaluate(const ModelSpec& spec, const ParamVector& params,
                const Dataset& data) {
  if (data.size() == 0) throw ConfigError("evaluate: empty dataset");
  std::size_t correct = 0;
  for (const LabeledExample& example : data.examples) {
    const OutputDist dist = forward(spec, params, example.features);
    std::size_t argmax = 0;
    for (std::size_t c = 1; c < dist.log_probs.size(); ++c) {
      if (dist.log_probs[c] > dist.log_probs[argmax]) argmax = c;
    }
    if (argmax == example.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

void write_metrics_csv(const TrainMetrics& metrics, std::ostream& os) {
  os << "step,train_loss,eval_accuracy,params_changed_count\n";
  os.precision(17);
  for (const MetricRecord& rec : metrics.records) {
    os << rec.step << ',' << rec.train_loss << ',' << rec.eval_accuracy << ','
       << rec.params_changed_count << '\n';
  }
}

namespace {
constexpr char kParamMagic[8] = {'F', 'I', 'S', 'H', 'P', 'A', 'R', 'M'};
constexpr std::uint32_t kParamFormatVersion = 1;
}  // namespace

void save_params(const ParamVector& params, const std::string& path) {
  io::atomic_write(path, [&](std::ostream& os) {
    io::ChecksummedWriter w(os);
    w.write_raw(kParamMagic, sizeof(kParamMagic));
    w.write<std::uint32_t>(kParamFormatVersion);
    w.write<std::uint64_t>(params.size());
    w.write_span(params.data(), params.size());
  });
}

ParamVector load_params(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  io::ChecksummedReader r(is, path);
  char magic[8];
  r.read_raw(magic, sizeof(magic));
  if (std::memcmp(magic, kParamMagic, sizeof(magic)) != 0) {
    throw DataError(path + ": bad magic at offset 0");
  }
  const auto version = r.read<std::uint32_t>();
  if (version != kParamFormatVersion) {
    throw DataError(path + ": unsupported version " + std::to_string(version));
  }
  const auto len = r.read<std::uint64_t>();
  ParamVector params(len);
  r.read_span(params.data(), len);
  return params;
}

}  // namespace fishmask
