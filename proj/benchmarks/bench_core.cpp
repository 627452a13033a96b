// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <random>

#include "fishmask/data.hpp"
#include "fishmask/fisher.hpp"
#include "fishmask/mask.hpp"
#include "fishmask/trainer.hpp"

namespace {

using namespace fishmask;

const ModelSpec& ref_model() {
  static const ModelSpec spec = ModelSpec::make({20, 100, 4});
  return spec;
}

const Dataset& ref_data() {
  static const Dataset data = gen_blobs(4, 100, 20, 3.0, 1.0, 42);
  return data;
}

void BM_Forward(benchmark::State& state) {
  const ModelSpec& spec = ref_model();
  const ParamVector params = init_params(spec, 1);
  const auto& example = ref_data().examples.front();
  for (auto _ : state) {
    benchmark::DoNotOptimize(forward(spec, params, example.features));
  }
}
BENCHMARK(BM_Forward);

void BM_LossAndGrad_Batch16(benchmark::State& state) {
  const ModelSpec& spec = ref_model();
  const ParamVector params = init_params(spec, 1);
  const std::vector<LabeledExample> batch(ref_data().examples.begin(),
                                          ref_data().examples.begin() + 16);
  for (auto _ : state) {
    benchmark::DoNotOptimize(loss_and_grad(spec, params, batch));
  }
}
BENCHMARK(BM_LossAndGrad_Batch16);

void BM_EmpiricalFisher(benchmark::State& state) {
  const ModelSpec& spec = ref_model();
  const ParamVector params = init_params(spec, 1);
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        empirical_fisher(spec, params, ref_data().examples, n));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * n);
}
BENCHMARK(BM_EmpiricalFisher)->Arg(16)->Arg(64)->Arg(256);

void BM_TrueFisherExact(benchmark::State& state) {
  const ModelSpec& spec = ref_model();
  const ParamVector params = init_params(spec, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        true_fisher_exact(spec, params, ref_data().examples, 64));
  }
}
BENCHMARK(BM_TrueFisherExact);

void BM_BuildFishMask(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  FisherDiag fisher;
  fisher.scores.resize(n);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> score(0.0, 1.0);
  for (double& s : fisher.scores) s = score(rng);
  const std::size_t k = n / 100;
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_fish_mask(fisher, k));
  }
}
BENCHMARK(BM_BuildFishMask)->Arg(10000)->Arg(1000000);

void BM_SgdStepMasked(benchmark::State& state) {
  const ModelSpec& spec = ref_model();
  const ParamVector params = init_params(spec, 1);
  const std::vector<LabeledExample> batch(ref_data().examples.begin(),
                                          ref_data().examples.begin() + 16);
  const SparseMask mask = build_random_mask(spec.param_count, 250, 5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(sgd_step_masked(spec, params, batch, &mask, 0.1));
  }
}
BENCHMARK(BM_SgdStepMasked);

}  // namespace

BENCHMARK_MAIN();
