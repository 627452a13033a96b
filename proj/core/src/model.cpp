// SPDX-License-Identifier: Apache-2.0
#include "fishmask/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <json.hpp>

#include "fishmask/errors.hpp"
#include "fishmask/rng.hpp"

namespace fishmask {

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation '" + name + "' (expected relu|tanh)");
}

std::string to_string(Activation a) {
  return a == Activation::kRelu ? "relu" : "tanh";
}

ModelSpec ModelSpec::make(std::vector<std::size_t> layer_sizes,
                          Activation activation) {
  if (layer_sizes.size() < 2) {
    throw ConfigError("layer_sizes needs at least [input_dim, classes]");
  }
  for (std::size_t s : layer_sizes) {
    if (s == 0) throw ConfigError("layer_sizes entries must be positive");
  }
  if (layer_sizes.back() < 2) {
    throw ConfigError("class count must be >= 2");
  }

  ModelSpec spec;
  spec.layer_sizes = std::move(layer_sizes);
  spec.activation = activation;

  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
    LayerShape shape;
    shape.in = spec.layer_sizes[l];
    shape.out = spec.layer_sizes[l + 1];
    shape.weight_offset = offset;
    shape.bias_offset = offset + shape.in * shape.out;
    offset = shape.bias_offset + shape.out;
    spec.layers.push_back(shape);
  }
  spec.param_count = offset;
  spec.classifier_slice = {spec.layers.back().weight_offset, offset};
  return spec;
}

ModelConfig model_config_from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad model JSON: ") + e.what());
  }
  if (!j.contains("layer_sizes") || !j["layer_sizes"].is_array()) {
    throw ConfigError("model JSON needs a layer_sizes array");
  }
  std::vector<std::size_t> sizes;
  for (const auto& v : j["layer_sizes"]) {
    if (!v.is_number_unsigned() || v.get<std::uint64_t>() == 0) {
      throw ConfigError("layer_sizes entries must be positive integers");
    }
    sizes.push_back(v.get<std::size_t>());
  }
  ModelConfig config;
  config.spec = ModelSpec::make(
      std::move(sizes),
      activation_from_string(j.value("activation", std::string("relu"))));
  config.seed = j.value("seed", std::uint64_t{0});
  return config;
}

std::string model_config_to_json(const ModelConfig& config) {
  nlohmann::json j;
  j["layer_sizes"] = config.spec.layer_sizes;
  j["activation"] = to_string(config.spec.activation);
  j["seed"] = config.seed;
  return j.dump();
}

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
  ParamVector params(spec.param_count, 0.0);
  auto rng = make_rng(seed, Stream::kInit);
  std::normal_distribution<double> unit(0.0, 1.0);
  for (const LayerShape& layer : spec.layers) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(layer.in));
    for (std::size_t i = 0; i < layer.in * layer.out; ++i) {
      params[layer.weight_offset + i] = scale * unit(rng);
    }
    // biases stay zero
  }
  return params;
}

namespace {

double activate(Activation a, double z) {
  return a == Activation::kRelu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

// Derivative expressed through the activation output; for tanh this reuses
// the stored a = tanh(z).
double activate_deriv(Activation act, double z, double a) {
  return act == Activation::kRelu ? (z > 0.0 ? 1.0 : 0.0) : 1.0 - a * a;
}

// Per-call scratch for one forward/backward pass.
struct Workspace {
  std::vector<std::vector<double>> activations;  // a[0] = input
  std::vector<std::vector<double>> preacts;      // z per layer
  std::vector<double> dz;
  std::vector<double> dz_prev;
};

void check_features(const ModelSpec& spec, std::span<const double> features) {
  if (features.size() != spec.input_dim()) {
    throw ConfigError("feature length " + std::to_string(features.size()) +
                      " != model input dim " +
                      std::to_string(spec.input_dim()));
  }
}

void check_params(const ModelSpec& spec, const ParamVector& params) {
  if (params.size() != spec.param_count) {
    throw ConfigError("parameter vector length " +
                      std::to_string(params.size()) + " != |theta| " +
                      std::to_string(spec.param_count));
  }
}

// Runs all layers, leaving raw logits in ws.preacts.back().
void forward_pass(const ModelSpec& spec, const ParamVector& params,
                  std::span<const double> features, Workspace& ws) {
  const std::size_t depth = spec.layers.size();
  ws.activations.resize(depth + 1);
  ws.preacts.resize(depth);
  ws.activations[0].assign(features.begin(), features.end());

  for (std::size_t l = 0; l < depth; ++l) {
    const LayerShape& layer = spec.layers[l];
    const std::vector<double>& a = ws.activations[l];
    std::vector<double>& z = ws.preacts[l];
    z.assign(layer.out, 0.0);
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double* w = params.data() + layer.weight_offset + o * layer.in;
      double acc = params[layer.bias_offset + o];
      for (std::size_t i = 0; i < layer.in; ++i) acc += w[i] * a[i];
      z[o] = acc;
    }
    if (l + 1 < depth) {
      std::vector<double>& a_next = ws.activations[l + 1];
      a_next.resize(layer.out);
      for (std::size_t o = 0; o < layer.out; ++o) {
        a_next[o] = activate(spec.activation, z[o]);
      }
    }
  }
}

std::vector<double> log_softmax(const std::vector<double>& logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - m);
  const double lse = m + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t c = 0; c < logits.size(); ++c) out[c] = logits[c] - lse;
  return out;
}

// Backpropagates d(objective)/d(logits) through the network, accumulating
// parameter gradients into grad (length |theta|).
void backward_pass(const ModelSpec& spec, const ParamVector& params,
                   const Workspace& ws, std::vector<double> dlogits,
                   std::vector<double>& grad, Workspace& scratch) {
  std::vector<double>& dz = scratch.dz;
  std::vector<double>& dz_prev = scratch.dz_prev;
  dz = std::move(dlogits);

  for (std::size_t li = spec.layers.size(); li-- > 0;) {
    const LayerShape& layer = spec.layers[li];
    const std::vector<double>& a = ws.activations[li];
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double d = dz[o];
      double* gw = grad.data() + layer.weight_offset + o * layer.in;
      for (std::size_t i = 0; i < layer.in; ++i) gw[i] += d * a[i];
      grad[layer.bias_offset + o] += d;
    }
    if (li == 0) break;

    dz_prev.assign(layer.in, 0.0);
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double d = dz[o];
      const double* w = params.data() + layer.weight_offset + o * layer.in;
      for (std::size_t i = 0; i < layer.in; ++i) dz_prev[i] += w[i] * d;
    }
    const std::vector<double>& z = ws.preacts[li - 1];
    const std::vector<double>& a_out = ws.activations[li];
    for (std::size_t i = 0; i < layer.in; ++i) {
      dz_prev[i] *= activate_deriv(spec.activation, z[i], a_out[i]);
    }
    std::swap(dz, dz_prev);
  }
}

}  // namespace

OutputDist forward(const ModelSpec& spec, const ParamVector& params,
                   std::span<const double> features) {
  check_params(spec, params);
  check_features(spec, features);
  Workspace ws;
  forward_pass(spec, params, features, ws);
  return OutputDist{log_softmax(ws.preacts.back())};
}

LossGrad loss_and_grad(const ModelSpec& spec, const ParamVector& params,
                       std::span<const LabeledExample> batch) {
  check_params(spec, params);
  if (batch.empty()) throw ConfigError("loss_and_grad: empty batch");

  LossGrad result;
  result.grad.assign(spec.param_count, 0.0);
  Workspace ws;
  std::vector<double> dlogits;

  for (const LabeledExample& example : batch) {
    check_features(spec, example.features);
    if (example.label >= spec.classes()) {
      throw ConfigError("label " + std::to_string(example.label) +
                        " out of range for " +
                        std::to_string(spec.classes()) + " classes");
    }
    forward_pass(spec, params, example.features, ws);
    const std::vector<double> log_probs = log_softmax(ws.preacts.back());
    result.loss -= log_probs[example.label];

    // d(-log p[y])/d(logits) = softmax - onehot(y)
    dlogits.resize(log_probs.size());
    for (std::size_t c = 0; c < log_probs.size(); ++c) {
      dlogits[c] = std::exp(log_probs[c]);
    }
    dlogits[example.label] -= 1.0;
    backward_pass(spec, params, ws, dlogits, result.grad, ws);
  }

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  result.loss *= inv_n;
  for (double& g : result.grad) g *= inv_n;
  return result;
}

std::vector<double> logprob_grad(const ModelSpec& spec,
                                 const ParamVector& params,
                                 std::span<const double> features,
                                 std::size_t class_index) {
  check_params(spec, params);
  check_features(spec, features);
  if (class_index >= spec.classes()) {
    throw ConfigError("class index " + std::to_string(class_index) +
                      " out of range for " + std::to_string(spec.classes()) +
                      " classes");
  }

  Workspace ws;
  forward_pass(spec, params, features, ws);
  const std::vector<double> log_probs = log_softmax(ws.preacts.back());

  // d(log p[c])/d(logits) = onehot(c) - softmax
  std::vector<double> dlogits(log_probs.size());
  for (std::size_t c = 0; c < log_probs.size(); ++c) {
    dlogits[c] = -std::exp(log_probs[c]);
  }
  dlogits[class_index] += 1.0;

  std::vector<double> grad(spec.param_count, 0.0);
  backward_pass(spec, params, ws, dlogits, grad, ws);
  return grad;
}

}  // namespace fishmask
