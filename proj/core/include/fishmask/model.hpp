// SPDX-License-Identifier: Apache-2.0
#pragma once

// Minimal differentiable classifiers (logistic regression, MLP) over one
// flat 64-bit parameter vector. The flat layout is the shared address space
// that Fisher scores, sparse masks, deltas and checkpoints all index into.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fishmask {

enum class Activation { kRelu, kTanh };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);

/// Half-open index interval into the flat parameter vector.
struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool empty() const { return begin >= end; }
  bool contains(std::size_t i) const { return i >= begin && i < end; }
};

/// One linear layer's location inside the flat vector. Weights are stored
/// row-major (out x in) and precede the bias block.
struct LayerShape {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
};

struct ModelSpec {
  std::vector<std::size_t> layer_sizes;  // input dim, hidden dims..., classes
  Activation activation = Activation::kRelu;

  // Derived, filled by make():
  std::vector<LayerShape> layers;
  std::size_t param_count = 0;
  IndexRange classifier_slice;  // final layer weights + biases

  static ModelSpec make(std::vector<std::size_t> layer_sizes,
                        Activation activation = Activation::kRelu);

  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t classes() const { return layer_sizes.back(); }
};

// JSON form: {"layer_sizes": [...], "activation": "relu", "seed": n}
struct ModelConfig {
  ModelSpec spec;
  std::uint64_t seed = 0;
};

ModelConfig model_config_from_json(const std::string& json_text);
std::string model_config_to_json(const ModelConfig& config);

using ParamVector = std::vector<double>;

struct LabeledExample {
  std::vector<double> features;
  std::size_t label = 0;
};

struct OutputDist {
  std::vector<double> log_probs;
};

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Fan-in-scaled zero-mean weights, biases exactly zero. Deterministic for
/// a fixed seed.
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

/// Log-probabilities via log-sum-exp with max subtraction; stable for
/// logits up to magnitude ~1e3.
OutputDist forward(const ModelSpec& spec, const ParamVector& params,
                   std::span<const double> features);

/// Mean negative log-likelihood over the batch and its gradient w.r.t. all
/// parameters.
LossGrad loss_and_grad(const ModelSpec& spec, const ParamVector& params,
                       std::span<const LabeledExample> batch);

/// Gradient of log p(class_index | features) w.r.t. all parameters.
std::vector<double> logprob_grad(const ModelSpec& spec,
                                 const ParamVector& params,
                                 std::span<const double> features,
                                 std::size_t class_index);

}  // namespace fishmask
