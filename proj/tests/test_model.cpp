// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "fishmask/errors.hpp"
#include "fishmask/model.hpp"
#include "test_util.hpp"

using namespace fishmask;

TEST_SUITE("model") {

TEST_CASE("parameter counting and layout") {
  const ModelSpec lr = ModelSpec::make({2, 2});
  CHECK(lr.param_count == 6);  // 4 weights + 2 biases
  CHECK(lr.classifier_slice.begin == 0);
  CHECK(lr.classifier_slice.end == 6);

  const ModelSpec mlp = ModelSpec::make({4, 8, 3});
  CHECK(mlp.param_count == 67);  // 4*8+8 + 8*3+3
  CHECK(mlp.layers.size() == 2);
  CHECK(mlp.layers[1].weight_offset == 40);
  CHECK(mlp.classifier_slice.begin == 40);
  CHECK(mlp.classifier_slice.end == 67);
}

TEST_CASE("model shape validation") {
  CHECK_THROWS_AS(ModelSpec::make({5}), ConfigError);
  CHECK_THROWS_AS(ModelSpec::make({5, 1}), ConfigError);
  CHECK_THROWS_AS(ModelSpec::make({0, 2}), ConfigError);
  CHECK_THROWS_AS(activation_from_string("sigmoid"), ConfigError);
}

TEST_CASE("init_params: biases zero, deterministic, fan-in scaled") {
  const ModelSpec spec = ModelSpec::make({2, 2});
  const ParamVector params = init_params(spec, 7);
  REQUIRE(params.size() == 6);
  CHECK(params[4] == 0.0);
  CHECK(params[5] == 0.0);
  CHECK(params[0] != 0.0);

  const ParamVector again = init_params(spec, 7);
  CHECK(std::memcmp(params.data(), again.data(),
                    params.size() * sizeof(double)) == 0);
  const ParamVector other = init_params(spec, 8);
  CHECK(std::memcmp(params.data(), other.data(),
                    params.size() * sizeof(double)) != 0);
}

TEST_CASE("forward: all-zero params give uniform log probs") {
  const ModelSpec spec = ModelSpec::make({4, 8, 3});
  const ParamVector zeros(spec.param_count, 0.0);
  const OutputDist dist = forward(spec, zeros, std::vector<double>{1, 2, 3, 4});
  for (double lp : dist.log_probs) {
    CHECK(lp == doctest::Approx(std::log(1.0 / 3.0)).epsilon(1e-12));
  }
}

TEST_CASE("forward: logistic regression matches hand-computed log-softmax") {
  const ModelSpec spec = ModelSpec::make({2, 2});
  // W = [[0.3, -1.2], [2.0, 0.5]] row-major, biases 0; input (1,0) selects
  // the first weight column (0.3, 2.0).
  const ParamVector params = {0.3, -1.2, 2.0, 0.5, 0.0, 0.0};
  const OutputDist dist = forward(spec, params, std::vector<double>{1.0, 0.0});
  const std::vector<double> p = testutil::softmax({0.3, 2.0});
  CHECK(dist.log_probs[0] == doctest::Approx(std::log(p[0])).epsilon(1e-12));
  CHECK(dist.log_probs[1] == doctest::Approx(std::log(p[1])).epsilon(1e-12));
}

TEST_CASE("forward: exp(log_probs) sums to one and is stable at huge logits") {
  const ModelSpec spec = ModelSpec::make({3, 5, 4}, Activation::kTanh);
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto rc = testutil::random_case(spec, rng);
    const OutputDist dist = forward(spec, rc.params, rc.example.features);
    double sum = 0.0;
    for (double lp : dist.log_probs) sum += std::exp(lp);
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
  // Magnitude-1e3 logits via a hand-set logistic regression.
  const ModelSpec lr = ModelSpec::make({2, 2});
  const ParamVector big = {1000.0, 0.0, -1000.0, 0.0, 0.0, 0.0};
  const OutputDist dist = forward(lr, big, std::vector<double>{1.0, 0.0});
  CHECK(std::isfinite(dist.log_probs[0]));
  CHECK(std::isfinite(dist.log_probs[1]));
  CHECK(dist.log_probs[0] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("forward: dimension mismatch") {
  const ModelSpec spec = ModelSpec::make({3, 2});
  const ParamVector params(spec.param_count, 0.1);
  CHECK_THROWS_AS(forward(spec, params, std::vector<double>{1.0, 2.0}),
                  ConfigError);
  CHECK_THROWS_AS(
      forward(spec, ParamVector(5, 0.0), std::vector<double>{1.0, 2.0, 3.0}),
      ConfigError);
}

TEST_CASE("loss_and_grad: uniform prediction loss, empty batch error") {
  const ModelSpec spec = ModelSpec::make({4, 8, 3});
  const ParamVector zeros(spec.param_count, 0.0);
  std::vector<LabeledExample> batch = {{{1, 2, 3, 4}, 0}, {{0, 1, 0, 1}, 2}};
  const LossGrad lg = loss_and_grad(spec, zeros, batch);
  CHECK(lg.loss == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK_THROWS_AS(loss_and_grad(spec, zeros, std::vector<LabeledExample>{}),
                  ConfigError);
}

TEST_CASE("loss_and_grad: duplicated example equals the single example") {
  const ModelSpec spec = ModelSpec::make({3, 6, 2}, Activation::kTanh);
  std::mt19937_64 rng(5);
  const auto rc = testutil::random_case(spec, rng);
  const std::vector<LabeledExample> one = {rc.example};
  const std::vector<LabeledExample> two = {rc.example, rc.example};
  const LossGrad a = loss_and_grad(spec, rc.params, one);
  const LossGrad b = loss_and_grad(spec, rc.params, two);
  CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-12));
  CHECK(testutil::grads_agree(a.grad, b.grad, 1e-12, 1e-12));
}

TEST_CASE("gradients match central finite differences") {
  std::mt19937_64 rng(42);
  for (Activation act : {Activation::kTanh, Activation::kRelu}) {
    const ModelSpec spec = ModelSpec::make({3, 5, 3}, act);
    for (int trial = 0; trial < 10; ++trial) {
      const auto rc = testutil::random_case(spec, rng);
      const std::vector<LabeledExample> batch = {rc.example};

      const LossGrad lg = loss_and_grad(spec, rc.params, batch);
      CHECK(testutil::grads_agree(
          lg.grad, testutil::fd_loss_grad(spec, rc.params, batch)));

      const std::vector<double> g = logprob_grad(
          spec, rc.params, rc.example.features, rc.example.label);
      CHECK(testutil::grads_agree(
          g, testutil::fd_logprob_grad(spec, rc.params, rc.example.features,
                                       rc.example.label)));
    }
  }
}

TEST_CASE("logprob_grad: closed-form softmax gradient for logistic "
          "regression") {
  const ModelSpec spec = ModelSpec::make({3, 4});
  std::mt19937_64 rng(9);
  std::normal_distribution<double> unit(0.0, 1.0);
  ParamVector params(spec.param_count);
  for (double& v : params) v = unit(rng);
  const std::vector<double> x = {0.5, -1.5, 2.0};
  for (std::size_t c = 0; c < 4; ++c) {
    const std::vector<double> got = logprob_grad(spec, params, x, c);
    const std::vector<double> want =
        testutil::lr_score_closed_form(spec, params, x, c);
    CHECK(testutil::grads_agree(got, want, 1e-12, 1e-12));
  }
}

TEST_CASE("logprob_grad: score function has zero mean under the model") {
  const ModelSpec spec = ModelSpec::make({4, 6, 3}, Activation::kTanh);
  std::mt19937_64 rng(3);
  const auto rc = testutil::random_case(spec, rng);
  const OutputDist dist = forward(spec, rc.params, rc.example.features);
  std::vector<double> acc(spec.param_count, 0.0);
  for (std::size_t c = 0; c < 3; ++c) {
    const std::vector<double> g =
        logprob_grad(spec, rc.params, rc.example.features, c);
    const double p = std::exp(dist.log_probs[c]);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += p * g[i];
  }
  for (double v : acc) CHECK(std::abs(v) < 1e-8);
}

TEST_CASE("logprob_grad: class index out of range") {
  const ModelSpec spec = ModelSpec::make({2, 2});
  const ParamVector params(spec.param_count, 0.1);
  CHECK_THROWS_AS(logprob_grad(spec, params, std::vector<double>{1.0, 0.0}, 2),
                  ConfigError);
}

TEST_CASE("model config JSON round trip") {
  ModelConfig config;
  config.spec = ModelSpec::make({20, 100, 4}, Activation::kTanh);
  config.seed = 77;
  const ModelConfig parsed =
      model_config_from_json(model_config_to_json(config));
  CHECK(parsed.spec.layer_sizes == config.spec.layer_sizes);
  CHECK(parsed.spec.activation == Activation::kTanh);
  CHECK(parsed.seed == 77);
  CHECK_THROWS_AS(model_config_from_json("{"), ConfigError);
  CHECK_THROWS_AS(model_config_from_json(R"({"layer_sizes": [3, 0]})"),
                  ConfigError);
}

}  // TEST_SUITE
