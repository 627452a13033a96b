// SPDX-License-Identifier: Apache-2.0
#pragma once

// Experiment drivers: sparsity sweeps, Fisher sample/variant ablations,
// distributed budget curves, and checkpoint schedule grids, each with
// multi-seed orchestration and machine-readable reports (one JSON + one
// flat CSV per experiment).

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fishmask/checkpoint.hpp"
#include "fishmask/data.hpp"
#include "fishmask/distsim.hpp"
#include "fishmask/fisher.hpp"
#include "fishmask/mask.hpp"
#include "fishmask/trainer.hpp"

namespace fishmask {

// ---------------------------------------------------------------------------
// Task definition: dataset + model + split, loadable from JSON or by
// builtin name. "blobs-ref" is the reference synthetic task every
// cross-module experiment anchors on.
// ---------------------------------------------------------------------------

struct DatasetSpec {
  std::string kind = "blobs";  // blobs | moons | idx | csv
  // blobs / moons
  std::size_t classes = 4;
  std::size_t per_class = 500;
  std::size_t feature_dim = 20;
  double center_separation = 3.0;
  double noise_sigma = 1.0;
  std::uint64_t seed = 42;
  // idx / csv
  std::string images_path;
  std::string labels_path;
  std::string csv_path;
  std::size_t label_column = 0;
  std::size_t limit = 0;
};

struct TaskSpec {
  std::string name = "blobs-ref";
  DatasetSpec dataset;
  double eval_fraction = 0.2;
  std::uint64_t split_seed = 42;
  std::vector<std::size_t> layer_sizes = {20, 100, 4};
  Activation activation = Activation::kRelu;
  std::uint64_t model_seed = 1;

  ModelSpec model() const;
  Dataset materialize() const;
  std::pair<Dataset, Dataset> train_eval() const;
  std::string to_json() const;
};

/// Builtin name ("blobs-ref", "moons-small") or a path to a task JSON file.
TaskSpec load_task(const std::string& name_or_path);
TaskSpec task_from_json(const std::string& json_text);

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct SeriesStats {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation, 0 for n < 2
};

SeriesStats series_stats(const std::vector<double>& values);

struct CellResult {
  std::vector<std::pair<std::string, std::string>> key;  // ordered columns
  std::map<std::string, std::vector<double>> per_seed;   // metric -> values

  SeriesStats stats(const std::string& metric) const;
};

struct ExperimentReport {
  std::string experiment;
  std::string version;
  std::string config_json;  // full echo; re-running it reproduces per-seed
  std::vector<CellResult> cells;
  double wall_clock_seconds = 0.0;

  std::string to_json() const;
  std::string to_csv() const;
};

/// Writes <experiment>.json and <experiment>.csv into out_dir (created if
/// missing). Returns the JSON path.
std::string write_report(const ExperimentReport& report,
                         const std::string& out_dir);

// ---------------------------------------------------------------------------
// Shared run options
// ---------------------------------------------------------------------------

struct RunOptions {
  std::size_t seeds = 5;
  std::uint64_t base_seed = 1;
  std::size_t threads = 1;
  std::string out_dir = "out";
  TrainConfig train;  // learning_rate/batch/epochs; seed is set per run
};

/// Executes fn(0..jobs-1) on up to `threads` workers. Results must be
/// written to per-index slots; the schedule never affects outputs.
void run_parallel(std::size_t jobs, std::size_t threads,
                  const std::function<void(std::size_t)>& fn);

/// Seed-shuffled copy used to pick "the first N" Fisher examples.
Dataset shuffled_for_fisher(const Dataset& data, std::uint64_t seed);

/// Convenience: empirical (or chosen-variant) Fisher on the first
/// min(n_samples, |data|) examples of the seed-shuffled dataset.
FisherDiag estimate_fisher(const ModelSpec& spec, const ParamVector& params,
                           const Dataset& data, FisherVariant variant,
                           std::size_t n_samples, std::size_t draws,
                           std::uint64_t seed);

/// |a ∩ b| / k for two masks of equal k.
double mask_overlap(const SparseMask& a, const SparseMask& b);

// ---------------------------------------------------------------------------
// Experiment runners (the cmd_* operations behind the CLI subcommands)
// ---------------------------------------------------------------------------

struct FisherExportResult {
  std::string binary_path;
  std::string summary_path;
  std::size_t clamped_samples = 0;  // actual N used
};

FisherExportResult run_fisher_export(const TaskSpec& task,
                                     FisherVariant variant,
                                     std::size_t n_samples, std::size_t draws,
                                     const RunOptions& options);

ExperimentReport run_sweep_sparsity(const TaskSpec& task,
                                    const std::vector<double>& sparsities,
                                    const std::vector<std::string>& mask_kinds,
                                    const RunOptions& options,
                                    std::size_t fisher_samples = 1024,
                                    bool include_classifier = false);

ExperimentReport run_ablate_samples(const TaskSpec& task, double sparsity,
                                    const std::vector<std::size_t>& n_values,
                                    const RunOptions& options);

ExperimentReport run_ablate_fisher_type(const TaskSpec& task, double sparsity,
                                        const RunOptions& options,
                                        std::size_t fisher_samples = 1024,
                                        std::size_t sampled_draws = 0);

struct DistributedGrid {
  std::vector<std::string> strategies = {"dense", "shared_fish",
                                         "shared_random"};
  double sparsity = 0.1;
  std::size_t workers = 2;
  std::size_t local_updates = 10;
  std::size_t rounds = 20;
  std::size_t warmup_epochs = 0;
  BroadcastMode broadcast = BroadcastMode::kAutoMin;
  std::size_t fisher_samples = 256;
};

ExperimentReport run_distributed_experiment(const TaskSpec& task,
                                            const DistributedGrid& grid,
                                            const RunOptions& options);

struct CheckpointGrid {
  std::vector<std::string> mask_kinds = {"fish", "random"};
  std::vector<double> sparsities = {0.005, 0.02, 0.1};
  std::vector<std::string> schedules = {"1", "2", "4", "fixed"};
  std::size_t fisher_samples = 1024;
};

ExperimentReport run_checkpoint_experiment(const TaskSpec& task,
                                           const CheckpointGrid& grid,
                                           const RunOptions& options);

}  // namespace fishmask
