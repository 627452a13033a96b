// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <sstream>

#include "fishmask/data.hpp"
#include "fishmask/errors.hpp"
#include "fishmask/experiments.hpp"
#include "fishmask/fisher.hpp"
#include "fishmask/mask.hpp"
#include "fishmask/trainer.hpp"

using namespace fishmask;

namespace {

SparseMask full_mask(std::size_t n) {
  SparseMask mask;
  mask.indices.resize(n);
  for (std::size_t i = 0; i < n; ++i) mask.indices[i] = i;
  mask.k = n;
  return mask;
}

bool bit_equal(const ParamVector& a, const ParamVector& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("sgd_step_masked: full mask equals the dense step bit-exactly") {
  const ModelSpec spec = ModelSpec::make({3, 5, 2});
  const ParamVector params = init_params(spec, 1);
  const Dataset data = gen_blobs(2, 8, 3, 4.0, 1.0, 2);
  const auto batch = std::span<const LabeledExample>(data.examples);

  const ParamVector dense = sgd_step_masked(spec, params, batch, nullptr, 0.1);
  const SparseMask mask = full_mask(spec.param_count);
  const ParamVector masked = sgd_step_masked(spec, params, batch, &mask, 0.1);
  CHECK(bit_equal(dense, masked));
}

TEST_CASE("sgd_step_masked: a single-index mask changes exactly one scalar") {
  const ModelSpec spec = ModelSpec::make({3, 5, 2});
  const ParamVector params = init_params(spec, 1);
  const Dataset data = gen_blobs(2, 8, 3, 4.0, 1.0, 2);

  SparseMask one;
  one.indices = {7};
  one.k = 1;
  const ParamVector updated =
      sgd_step_masked(spec, params, data.examples, &one, 0.5);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (std::memcmp(&params[i], &updated[i], sizeof(double)) != 0) {
      ++changed;
      CHECK(i == 7);
    }
  }
  CHECK(changed == 1);
}

TEST_CASE("freeze invariant: non-mask coordinates bit-equal after many "
          "steps") {
  const ModelSpec spec = ModelSpec::make({4, 10, 3});
  const ParamVector params0 = init_params(spec, 3);
  const Dataset data = gen_blobs(3, 40, 4, 3.0, 1.0, 4);
  const auto [train_data, eval_data] = split_train_eval(data, 0.2, 4);

  const SparseMask mask = build_random_mask(spec.param_count, 5, 9);
  TrainConfig config;
  config.epochs = 150;  // 6 steps/epoch at batch 16 -> ~900 steps
  config.seed = 5;
  config.eval_every = 0;
  const TrainResult result =
      train(spec, params0, train_data, eval_data, mask, config);

  for (std::size_t i = 0; i < params0.size(); ++i) {
    if (!mask.contains(i)) {
      CHECK(std::memcmp(&params0[i], &result.params[i], sizeof(double)) == 0);
    }
  }
  for (const MetricRecord& rec : result.metrics.records) {
    CHECK(rec.params_changed_count <= mask.k);
  }
}

TEST_CASE("train: dense run separates well-separated blobs") {
  // 2 classes x 100 points with a wide margin.
  const Dataset data = gen_blobs(2, 100, 5, 4.0, 1.0, 11);
  const auto [train_data, eval_data] = split_train_eval(data, 0.2, 11);
  const ModelSpec spec = ModelSpec::make({5, 2});
  TrainConfig config;
  config.epochs = 50;
  config.seed = 1;
  config.eval_every = 0;
  const TrainResult result = train(spec, init_params(spec, 1), train_data,
                                   eval_data, std::nullopt, config);
  CHECK(evaluate(spec, result.params, train_data) >= 0.99);
}

TEST_CASE("train: full mask reproduces dense training bit-exactly") {
  const Dataset data = gen_blobs(3, 30, 4, 3.0, 1.0, 21);
  const auto [train_data, eval_data] = split_train_eval(data, 0.2, 21);
  const ModelSpec spec = ModelSpec::make({4, 8, 3});
  TrainConfig config;
  config.epochs = 5;
  config.seed = 13;
  const TrainResult dense = train(spec, init_params(spec, 13), train_data,
                                  eval_data, std::nullopt, config);
  const TrainResult masked =
      train(spec, init_params(spec, 13), train_data, eval_data,
            full_mask(spec.param_count), config);
  CHECK(bit_equal(dense.params, masked.params));
}

TEST_CASE("train: deterministic for a fixed seed, varies across seeds") {
  const Dataset data = gen_blobs(3, 30, 4, 3.0, 1.0, 31);
  const auto [train_data, eval_data] = split_train_eval(data, 0.2, 31);
  const ModelSpec spec = ModelSpec::make({4, 8, 3});
  TrainConfig config;
  config.epochs = 3;
  config.seed = 17;
  const TrainResult a = train(spec, init_params(spec, 17), train_data,
                              eval_data, std::nullopt, config);
  const TrainResult b = train(spec, init_params(spec, 17), train_data,
                              eval_data, std::nullopt, config);
  CHECK(bit_equal(a.params, b.params));

  config.seed = 18;
  const TrainResult c = train(spec, init_params(spec, 17), train_data,
                              eval_data, std::nullopt, config);
  CHECK(!bit_equal(a.params, c.params));
}

TEST_CASE("train: FISH mask beats or matches a random mask at 1% on the "
          "reference task (3 seeds)") {
  const TaskSpec task;  // blobs-ref
  const ModelSpec spec = task.model();
  const auto [train_data, eval_data] = task.train_eval();
  const std::size_t k = sparsity_to_k(spec.param_count, 0.01);

  double fish_total = 0.0, random_total = 0.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    TrainConfig config;
    config.epochs = 30;
    config.seed = seed;
    config.eval_every = 0;
    const ParamVector params0 = init_params(spec, seed);
    const FisherDiag fisher =
        estimate_fisher(spec, params0, train_data, FisherVariant::kEmpirical,
                        512, 0, seed);
    const TrainResult fish =
        train(spec, params0, train_data, eval_data,
              build_fish_mask(fisher, k), config);
    const TrainResult rnd =
        train(spec, params0, train_data, eval_data,
              build_random_mask(spec.param_count, k, seed), config);
    fish_total += fish.metrics.records.back().eval_accuracy;
    random_total += rnd.metrics.records.back().eval_accuracy;
  }
  CHECK(fish_total / 3.0 >= random_total / 3.0);
}

TEST_CASE("evaluate: tie-breaks to the lowest class index") {
  const ModelSpec spec = ModelSpec::make({2, 2});
  const ParamVector zeros(spec.param_count, 0.0);
  // Balanced two-class set; uniform output predicts class 0 everywhere, so
  // accuracy is exactly the class-0 fraction.
  Dataset balanced;
  balanced.class_count = 2;
  balanced.feature_dim = 2;
  for (int i = 0; i < 10; ++i) {
    balanced.examples.push_back({{double(i), 1.0}, i % 2 == 0 ? 0u : 1u});
  }
  CHECK(evaluate(spec, zeros, balanced) == 0.5);

  // Perfect separation scores 1.0.
  const ParamVector separating = {10.0, 0.0, -10.0, 0.0, 0.0, 0.0};
  Dataset tiny;
  tiny.class_count = 2;
  tiny.feature_dim = 2;
  tiny.examples.push_back({{1.0, 0.0}, 0});
  tiny.examples.push_back({{-1.0, 0.0}, 1});
  CHECK(evaluate(spec, separating, tiny) == 1.0);

  tiny.examples.resize(1);
  CHECK(evaluate(spec, separating, tiny) == 1.0);

  Dataset empty;
  CHECK_THROWS_AS(evaluate(spec, zeros, empty), ConfigError);
}

TEST_CASE("metrics CSV and params file round trip") {
  TrainMetrics metrics;
  metrics.records.push_back({100, 0.25, 0.875, 12});
  metrics.records.push_back({200, 0.125, 0.9375, 12});
  std::ostringstream os;
  write_metrics_csv(metrics, os);
  const std::string csv = os.str();
  CHECK(csv.find("step,train_loss,eval_accuracy,params_changed_count\n") == 0);
  CHECK(csv.find("100,0.25,0.875,12\n") != std::string::npos);

  const ParamVector params = {1.5, -2.25, 0.0, 1e-300, 3.14159};
  const auto path =
      (std::filesystem::temp_directory_path() / "fishmask_params.bin")
          .string();
  save_params(params, path);
  const ParamVector loaded = load_params(path);
  CHECK(bit_equal(params, loaded));
  CHECK_THROWS_AS(load_params("/nonexistent/params.bin"), DataError);
}

TEST_CASE("train: input validation") {
  const ModelSpec spec = ModelSpec::make({2, 2});
  const Dataset data = gen_blobs(2, 10, 2, 3.0, 1.0, 1);
  Dataset empty;
  TrainConfig config;
  CHECK_THROWS_AS(train(spec, init_params(spec, 1), empty, data, std::nullopt,
                        config),
                  ConfigError);
  config.learning_rate = 0.0;
  CHECK_THROWS_AS(train(spec, init_params(spec, 1), data, data, std::nullopt,
                        config),
                  ConfigError);
}

}  // TEST_SUITE
