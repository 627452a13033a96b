// SPDX-License-Identifier: Apache-2.0
#include "fishmask/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "fishmask/errors.hpp"
#include "fishmask/io.hpp"
#include "fishmask/rng.hpp"
#include "fishmask/version.hpp"

namespace fishmask {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Task handling
// ---------------------------------------------------------------------------

ModelSpec TaskSpec::model() const {
  return ModelSpec::make(layer_sizes, activation);
}

Dataset TaskSpec::materialize() const {
  if (dataset.kind == "blobs") {
    return gen_blobs(dataset.classes, dataset.per_class, dataset.feature_dim,
                     dataset.center_separation, dataset.noise_sigma,
                     dataset.seed);
  }
  if (dataset.kind == "moons") {
    return gen_moons(dataset.per_class, dataset.noise_sigma, dataset.seed);
  }
  if (dataset.kind == "idx") {
    return load_idx(dataset.images_path, dataset.labels_path, dataset.limit);
  }
  if (dataset.kind == "csv") {
    return load_csv(dataset.csv_path, dataset.label_column);
  }
  throw ConfigError("unknown dataset kind '" + dataset.kind + "'");
}

std::pair<Dataset, Dataset> TaskSpec::train_eval() const {
  return split_train_eval(materialize(), eval_fraction, split_seed);
}

std::string TaskSpec::to_json() const {
  ordered_json d;
  d["kind"] = dataset.kind;
  if (dataset.kind == "blobs") {
    d["classes"] = dataset.classes;
    d["per_class"] = dataset.per_class;
    d["feature_dim"] = dataset.feature_dim;
    d["center_separation"] = dataset.center_separation;
    d["noise_sigma"] = dataset.noise_sigma;
    d["seed"] = dataset.seed;
  } else if (dataset.kind == "moons") {
    d["per_class"] = dataset.per_class;
    d["noise_sigma"] = dataset.noise_sigma;
    d["seed"] = dataset.seed;
  } else if (dataset.kind == "idx") {
    d["images"] = dataset.images_path;
    d["labels"] = dataset.labels_path;
    d["limit"] = dataset.limit;
  } else if (dataset.kind == "csv") {
    d["path"] = dataset.csv_path;
    d["label_column"] = dataset.label_column;
  }
  ordered_json j;
  j["name"] = name;
  j["dataset"] = d;
  j["eval_fraction"] = eval_fraction;
  j["split_seed"] = split_seed;
  j["model"] = {{"layer_sizes", layer_sizes},
                {"activation", to_string(activation)},
                {"seed", model_seed}};
  return j.dump();
}

TaskSpec task_from_json(const std::string& json_text) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad task JSON: ") + e.what());
  }
  TaskSpec task;
  try {
    task.name = j.value("name", std::string("custom"));
    const auto& d = j.at("dataset");
    task.dataset.kind = d.value("kind", std::string("blobs"));
    if (task.dataset.kind == "blobs") {
      task.dataset.classes = d.at("classes").get<std::size_t>();
      task.dataset.per_class = d.at("per_class").get<std::size_t>();
      task.dataset.feature_dim = d.at("feature_dim").get<std::size_t>();
      task.dataset.center_separation =
          d.at("center_separation").get<double>();
      task.dataset.noise_sigma = d.at("noise_sigma").get<double>();
      task.dataset.seed = d.value("seed", std::uint64_t{42});
    } else if (task.dataset.kind == "moons") {
      task.dataset.per_class = d.at("per_class").get<std::size_t>();
      task.dataset.noise_sigma = d.at("noise_sigma").get<double>();
      task.dataset.seed = d.value("seed", std::uint64_t{42});
    } else if (task.dataset.kind == "idx") {
      task.dataset.images_path = d.at("images").get<std::string>();
      task.dataset.labels_path = d.at("labels").get<std::string>();
      task.dataset.limit = d.value("limit", std::size_t{0});
    } else if (task.dataset.kind == "csv") {
      task.dataset.csv_path = d.at("path").get<std::string>();
      task.dataset.label_column = d.at("label_column").get<std::size_t>();
    } else {
      throw ConfigError("unknown dataset kind '" + task.dataset.kind + "'");
    }
    task.eval_fraction = j.value("eval_fraction", 0.2);
    task.split_seed = j.value("split_seed", task.dataset.seed);
    const auto& m = j.at("model");
    task.layer_sizes = m.at("layer_sizes").get<std::vector<std::size_t>>();
    task.activation =
        activation_from_string(m.value("activation", std::string("relu")));
    task.model_seed = m.value("seed", std::uint64_t{1});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("task JSON missing fields: ") + e.what());
  }
  return task;
}

TaskSpec load_task(const std::string& name_or_path) {
  if (name_or_path == "blobs-ref") {
    return TaskSpec{};  // defaults are the reference synthetic task
  }
  if (name_or_path == "moons-small") {
    TaskSpec task;
    task.name = "moons-small";
    task.dataset.kind = "moons";
    task.dataset.per_class = 250;
    task.dataset.noise_sigma = 0.15;
    task.dataset.seed = 42;
    task.layer_sizes = {2, 32, 2};
    return task;
  }
  if (std::filesystem::exists(name_or_path)) {
    return task_from_json(io::read_text_file(name_or_path));
  }
  throw ConfigError("unknown task '" + name_or_path +
                    "' (builtin names: blobs-ref, moons-small; or a JSON "
                    "file path)");
}

// ---------------------------------------------------------------------------
// Stats and reports
// ---------------------------------------------------------------------------

SeriesStats series_stats(const std::vector<double>& values) {
  SeriesStats stats;
  if (values.empty()) return stats;
  stats.mean = std::accumulate(values.begin(), values.end(), 0.0) /
               static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - stats.mean) * (v - stats.mean);
    stats.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return stats;
}

SeriesStats CellResult::stats(const std::string& metric) const {
  const auto it = per_seed.find(metric);
  if (it == per_seed.end()) {
    throw ConfigError("no metric '" + metric + "' in cell");
  }
  return series_stats(it->second);
}

std::string ExperimentReport::to_json() const {
  ordered_json j;
  j["experiment"] = experiment;
  j["version"] = version;
  j["config"] = ordered_json::parse(config_json);
  ordered_json cells_json = ordered_json::array();
  for (const CellResult& cell : cells) {
    ordered_json key;
    for (const auto& [name, value] : cell.key) key[name] = value;
    ordered_json metrics;
    for (const auto& [metric, values] : cell.per_seed) {
      const SeriesStats stats = series_stats(values);
      metrics[metric] = {{"per_seed", values},
                         {"mean", stats.mean},
                         {"std", stats.stddev}};
    }
    cells_json.push_back({{"key", key}, {"metrics", metrics}});
  }
  j["cells"] = cells_json;
  j["wall_clock_seconds"] = wall_clock_seconds;
  return j.dump(2);
}

std::string ExperimentReport::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  if (cells.empty()) return "";
  // Columns: cell key names, then mean/std per metric.
  for (const auto& [name, value] : cells.front().key) os << name << ',';
  bool first = true;
  for (const auto& [metric, values] : cells.front().per_seed) {
    if (!first) os << ',';
    first = false;
    os << "mean_" << metric << ",std_" << metric;
  }
  os << '\n';
  for (const CellResult& cell : cells) {
    for (const auto& [name, value] : cell.key) os << value << ',';
    first = true;
    for (const auto& [metric, values] : cell.per_seed) {
      const SeriesStats stats = series_stats(values);
      if (!first) os << ',';
      first = false;
      os << stats.mean << ',' << stats.stddev;
    }
    os << '\n';
  }
  return os.str();
}

std::string write_report(const ExperimentReport& report,
                         const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const std::string json_path =
      (std::filesystem::path(out_dir) / (report.experiment + ".json"))
          .string();
  io::write_text_file(json_path, report.to_json());
  io::write_text_file(
      (std::filesystem::path(out_dir) / (report.experiment + ".csv"))
          .string(),
      report.to_csv());
  return json_path;
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

void run_parallel(std::size_t jobs, std::size_t threads,
                  const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || jobs <= 1) {
    for (std::size_t i = 0; i < jobs; ++i) fn(i);
    return;
  }
  threads = std::min(threads, jobs);
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&]() {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= jobs) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

Dataset shuffled_for_fisher(const Dataset& data, std::uint64_t seed) {
  Dataset shuffled;
  shuffled.class_count = data.class_count;
  shuffled.feature_dim = data.feature_dim;
  shuffled.provenance = data.provenance;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  auto rng = make_rng(seed, Stream::kFisherShuffle);
  std::shuffle(order.begin(), order.end(), rng);
  shuffled.examples.reserve(data.size());
  for (std::size_t i : order) shuffled.examples.push_back(data.examples[i]);
  return shuffled;
}

FisherDiag estimate_fisher(const ModelSpec& spec, const ParamVector& params,
                           const Dataset& data, FisherVariant variant,
                           std::size_t n_samples, std::size_t draws,
                           std::uint64_t seed) {
  const Dataset shuffled = shuffled_for_fisher(data, seed);
  const std::size_t n = std::min(n_samples, shuffled.size());
  switch (variant) {
    case FisherVariant::kEmpirical:
      return empirical_fisher(spec, params, shuffled.examples, n);
    case FisherVariant::kTrueExact:
      return true_fisher_exact(spec, params, shuffled.examples, n);
    case FisherVariant::kTrueSampled:
      return true_fisher_sampled(spec, params, shuffled.examples, n, draws,
                                 sub_seed(seed, Stream::kFisherDraws));
  }
  throw ConfigError("bad fisher variant");
}

double mask_overlap(const SparseMask& a, const SparseMask& b) {
  if (a.indices.size() != b.indices.size() || a.indices.empty()) {
    throw ConfigError("mask_overlap: masks must have equal nonzero k");
  }
  std::vector<std::size_t> common;
  std::set_intersection(a.indices.begin(), a.indices.end(), b.indices.begin(),
                        b.indices.end(), std::back_inserter(common));
  return static_cast<double>(common.size()) /
         static_cast<double>(a.indices.size());
}

namespace {

ordered_json train_config_json(const TrainConfig& config) {
  return {{"learning_rate", config.learning_rate},
          {"batch_size", config.batch_size},
          {"epochs", config.epochs},
          {"eval_every", config.eval_every}};
}

std::vector<std::uint64_t> seed_list(const RunOptions& options) {
  std::vector<std::uint64_t> seeds(options.seeds);
  for (std::size_t i = 0; i < options.seeds; ++i) {
    seeds[i] = options.base_seed + i;
  }
  return seeds;
}

ordered_json options_json(const RunOptions& options) {
  return {{"seeds", seed_list(options)},
          {"threads", options.threads},
          {"train", train_config_json(options.train)}};
}

// One masked (or dense) training run; returns final eval accuracy.
double run_one_training(const ModelSpec& spec, const Dataset& train_data,
                        const Dataset& eval_data,
                        const std::optional<SparseMask>& mask,
                        const TrainConfig& base_config, std::uint64_t seed) {
  TrainConfig config = base_config;
  config.seed = seed;
  config.eval_every = 0;  // final accuracy only; keeps sweeps fast
  const ParamVector params0 = init_params(spec, seed);
  return train(spec, params0, train_data, eval_data, mask, config)
      .metrics.records.back()
      .eval_accuracy;
}

SparseMask build_kind_mask(const std::string& kind, const ModelSpec& spec,
                           const Dataset& train_data, double sparsity,
                           std::size_t fisher_samples, std::uint64_t seed,
                           std::optional<IndexRange> always_include) {
  const std::size_t k = sparsity_to_k(spec.param_count, sparsity);
  if (kind == "random") {
    return build_random_mask(spec.param_count, k, seed, always_include);
  }
  if (kind == "fish") {
    const ParamVector params0 = init_params(spec, seed);
    const FisherDiag fisher =
        estimate_fisher(spec, params0, train_data, FisherVariant::kEmpirical,
                        fisher_samples, 0, seed);
    return build_fish_mask(fisher, k, always_include);
  }
  throw ConfigError("unknown mask kind '" + kind + "' (fish|random)");
}

double elapsed_seconds(
    const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                       start)
      .count();
}

std::string format_double_key(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// fisher export
// ---------------------------------------------------------------------------

FisherExportResult run_fisher_export(const TaskSpec& task,
                                     FisherVariant variant,
                                     std::size_t n_samples, std::size_t draws,
                                     const RunOptions& options) {
  const ModelSpec spec = task.model();
  const auto [train_data, eval_data] = task.train_eval();
  if (n_samples > train_data.size()) {
    std::cerr << "warning: n_samples " << n_samples
              << " exceeds train split size " << train_data.size()
              << ", clamping\n";
    n_samples = train_data.size();
  }
  const ParamVector params0 = init_params(spec, task.model_seed);
  const FisherDiag fisher =
      estimate_fisher(spec, params0, train_data, variant, n_samples,
                      draws == 0 ? 1 : draws, options.base_seed);

  std::filesystem::create_directories(options.out_dir);
  FisherExportResult result;
  result.clamped_samples = fisher.sample_count;
  result.binary_path =
      (std::filesystem::path(options.out_dir) /
       ("fisher_" + to_string(variant) + ".bin"))
          .string();
  result.summary_path =
      (std::filesystem::path(options.out_dir) /
       ("fisher_" + to_string(variant) + ".json"))
          .string();
  save_fisher(fisher, result.binary_path);
  io::write_text_file(result.summary_path, fisher_summary_json(fisher, 10));
  return result;
}

// ---------------------------------------------------------------------------
// sweep-sparsity
// ---------------------------------------------------------------------------

ExperimentReport run_sweep_sparsity(const TaskSpec& task,
                                    const std::vector<double>& sparsities,
                                    const std::vector<std::string>& mask_kinds,
                                    const RunOptions& options,
                                    std::size_t fisher_samples,
                                    bool include_classifier) {
  const auto start = std::chrono::steady_clock::now();
  if (sparsities.empty() || mask_kinds.empty() || options.seeds == 0) {
    throw ConfigError("sweep-sparsity: empty grid");
  }
  const ModelSpec spec = task.model();
  const auto [train_data, eval_data] = task.train_eval();
  const std::vector<std::uint64_t> seeds = seed_list(options);
  const std::optional<IndexRange> always =
      include_classifier ? std::optional<IndexRange>(spec.classifier_slice)
                         : std::nullopt;

  struct Job {
    std::size_t cell;
    std::uint64_t seed;
    std::string kind;
    double sparsity;
  };
  std::vector<Job> jobs;
  ExperimentReport report;
  report.experiment = "sweep-sparsity";
  report.version = kVersion;

  std::size_t cell_index = 0;
  for (const std::string& kind : mask_kinds) {
    for (double sparsity : sparsities) {
      CellResult cell;
      cell.key = {{"mask", kind}, {"sparsity", format_double_key(sparsity)}};
      cell.per_seed["accuracy"].resize(options.seeds);
      report.cells.push_back(std::move(cell));
      for (std::uint64_t seed : seeds) {
        jobs.push_back({cell_index, seed, kind, sparsity});
      }
      ++cell_index;
    }
  }

  std::vector<std::vector<double>> results(report.cells.size(),
                                           std::vector<double>(options.seeds));
  run_parallel(jobs.size(), options.threads, [&](std::size_t j) {
    const Job& job = jobs[j];
    const SparseMask mask =
        build_kind_mask(job.kind, spec, train_data, job.sparsity,
                        fisher_samples, job.seed, always);
    const double accuracy = run_one_training(spec, train_data, eval_data,
                                             mask, options.train, job.seed);
    results[job.cell][job.seed - options.base_seed] = accuracy;
  });
  for (std::size_t c = 0; c < report.cells.size(); ++c) {
    report.cells[c].per_seed["accuracy"] = results[c];
  }

  ordered_json config;
  config["task"] = ordered_json::parse(task.to_json());
  config["sparsities"] = sparsities;
  config["mask_kinds"] = mask_kinds;
  config["fisher_samples"] = fisher_samples;
  config["include_classifier"] = include_classifier;
  config["options"] = options_json(options);
  report.config_json = config.dump();
  report.wall_clock_seconds = elapsed_seconds(start);
  return report;
}

// ---------------------------------------------------------------------------
// ablate-samples
// ---------------------------------------------------------------------------

ExperimentReport run_ablate_samples(const TaskSpec& task, double sparsity,
                                    const std::vector<std::size_t>& n_values,
                                    const RunOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  if (n_values.empty() || options.seeds == 0) {
    throw ConfigError("ablate-samples: empty grid");
  }
  if (!std::is_sorted(n_values.begin(), n_values.end())) {
    throw ConfigError("ablate-samples: N values must be sorted ascending");
  }
  const ModelSpec spec = task.model();
  const auto [train_data, eval_data] = task.train_eval();
  const std::size_t k = sparsity_to_k(spec.param_count, sparsity);
  const std::size_t n_reference =
      std::min(n_values.back(), train_data.size());

  ExperimentReport report;
  report.experiment = "ablate-samples";
  report.version = kVersion;
  for (std::size_t n : n_values) {
    CellResult cell;
    cell.key = {{"samples", std::to_string(n)},
                {"sparsity", format_double_key(sparsity)}};
    cell.per_seed["accuracy"].resize(options.seeds);
    cell.per_seed["overlap_vs_reference"].resize(options.seeds);
    report.cells.push_back(std::move(cell));
  }

  struct Job {
    std::size_t cell;
    std::uint64_t seed;
    std::size_t samples;
  };
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < n_values.size(); ++c) {
    for (std::uint64_t seed : seed_list(options)) {
      jobs.push_back({c, seed, n_values[c]});
    }
  }

  std::vector<std::vector<double>> acc(n_values.size(),
                                       std::vector<double>(options.seeds));
  std::vector<std::vector<double>> overlap(n_values.size(),
                                           std::vector<double>(options.seeds));
  run_parallel(jobs.size(), options.threads, [&](std::size_t j) {
    const Job& job = jobs[j];
    const std::size_t seed_slot = job.seed - options.base_seed;
    const ParamVector params0 = init_params(spec, job.seed);

    // N = 0 is by definition the random-mask baseline.
    SparseMask mask;
    if (job.samples == 0) {
      mask = build_random_mask(spec.param_count, k, job.seed);
    } else {
      const FisherDiag fisher = estimate_fisher(
          spec, params0, train_data, FisherVariant::kEmpirical,
          std::min(job.samples, train_data.size()), 0, job.seed);
      mask = build_fish_mask(fisher, k);
    }
    const FisherDiag reference_fisher =
        estimate_fisher(spec, params0, train_data, FisherVariant::kEmpirical,
                        n_reference, 0, job.seed);
    const SparseMask reference_mask = build_fish_mask(reference_fisher, k);
    overlap[job.cell][seed_slot] = mask_overlap(mask, reference_mask);
    acc[job.cell][seed_slot] = run_one_training(
        spec, train_data, eval_data, mask, options.train, job.seed);
  });
  for (std::size_t c = 0; c < n_values.size(); ++c) {
    report.cells[c].per_seed["accuracy"] = acc[c];
    report.cells[c].per_seed["overlap_vs_reference"] = overlap[c];
  }

  ordered_json config;
  config["task"] = ordered_json::parse(task.to_json());
  config["sparsity"] = sparsity;
  config["sample_counts"] = n_values;
  config["reference_samples"] = n_reference;
  config["options"] = options_json(options);
  report.config_json = config.dump();
  report.wall_clock_seconds = elapsed_seconds(start);
  return report;
}

// ---------------------------------------------------------------------------
// ablate-fisher-type
// ---------------------------------------------------------------------------

ExperimentReport run_ablate_fisher_type(const TaskSpec& task, double sparsity,
                                        const RunOptions& options,
                                        std::size_t fisher_samples,
                                        std::size_t sampled_draws) {
  const auto start = std::chrono::steady_clock::now();
  const ModelSpec spec = task.model();
  const auto [train_data, eval_data] = task.train_eval();
  const std::size_t k = sparsity_to_k(spec.param_count, sparsity);

  std::vector<FisherVariant> variants = {FisherVariant::kEmpirical,
                                         FisherVariant::kTrueExact};
  if (sampled_draws > 0) variants.push_back(FisherVariant::kTrueSampled);

  ExperimentReport report;
  report.experiment = "ablate-fisher-type";
  report.version = kVersion;
  for (FisherVariant variant : variants) {
    CellResult cell;
    cell.key = {{"variant", to_string(variant)},
                {"sparsity", format_double_key(sparsity)}};
    cell.per_seed["accuracy"].resize(options.seeds);
    cell.per_seed["overlap_vs_empirical"].resize(options.seeds);
    report.cells.push_back(std::move(cell));
  }

  struct Job {
    std::size_t cell;
    std::uint64_t seed;
    FisherVariant variant;
  };
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < variants.size(); ++c) {
    for (std::uint64_t seed : seed_list(options)) {
      jobs.push_back({c, seed, variants[c]});
    }
  }

  std::vector<std::vector<double>> acc(variants.size(),
                                       std::vector<double>(options.seeds));
  std::vector<std::vector<double>> overlap(variants.size(),
                                           std::vector<double>(options.seeds));
  run_parallel(jobs.size(), options.threads, [&](std::size_t j) {
    const Job& job = jobs[j];
    const std::size_t seed_slot = job.seed - options.base_seed;
    const ParamVector params0 = init_params(spec, job.seed);
    const std::size_t n = std::min(fisher_samples, train_data.size());
    const FisherDiag fisher = estimate_fisher(
        spec, params0, train_data, job.variant, n, sampled_draws, job.seed);
    const SparseMask mask = build_fish_mask(fisher, k);

    const FisherDiag empirical =
        estimate_fisher(spec, params0, train_data, FisherVariant::kEmpirical,
                        n, 0, job.seed);
    overlap[job.cell][seed_slot] =
        mask_overlap(mask, build_fish_mask(empirical, k));
    acc[job.cell][seed_slot] = run_one_training(
        spec, train_data, eval_data, mask, options.train, job.seed);
  });
  for (std::size_t c = 0; c < variants.size(); ++c) {
    report.cells[c].per_seed["accuracy"] = acc[c];
    report.cells[c].per_seed["overlap_vs_empirical"] = overlap[c];
  }

  ordered_json config;
  config["task"] = ordered_json::parse(task.to_json());
  config["sparsity"] = sparsity;
  config["fisher_samples"] = fisher_samples;
  config["sampled_draws"] = sampled_draws;
  config["options"] = options_json(options);
  report.config_json = config.dump();
  report.wall_clock_seconds = elapsed_seconds(start);
  return report;
}

// ---------------------------------------------------------------------------
// distributed
// ---------------------------------------------------------------------------

ExperimentReport run_distributed_experiment(const TaskSpec& task,
                                            const DistributedGrid& grid,
                                            const RunOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  if (grid.strategies.empty() || options.seeds == 0) {
    throw ConfigError("distributed: empty grid");
  }
  const ModelSpec spec = task.model();
  const auto [train_data, eval_data] = task.train_eval();

  ExperimentReport report;
  report.experiment = "distributed";
  report.version = kVersion;

  struct Job {
    std::size_t strategy;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < grid.strategies.size(); ++s) {
    for (std::uint64_t seed : seed_list(options)) jobs.push_back({s, seed});
  }

  // results[strategy][seed_slot] = budget points of that run
  std::vector<std::vector<std::vector<BudgetPoint>>> curves(
      grid.strategies.size(),
      std::vector<std::vector<BudgetPoint>>(options.seeds));
  std::mutex io_mutex;

  run_parallel(jobs.size(), options.threads, [&](std::size_t j) {
    const Job& job = jobs[j];
    const std::string& strategy_name = grid.strategies[job.strategy];
    DistConfig dist;
    dist.workers = grid.workers;
    dist.local_updates = grid.local_updates;
    dist.rounds = grid.rounds;
    dist.mask_strategy = mask_strategy_from_string(strategy_name);
    dist.server_broadcast = grid.broadcast;
    dist.warmup_epochs = grid.warmup_epochs;
    dist.fisher_samples = grid.fisher_samples;
    dist.random_mask_seed = job.seed;
    if (dist.mask_strategy != MaskStrategy::kDense) {
      const std::size_t k = sparsity_to_k(spec.param_count, grid.sparsity);
      dist.mask_k = dist.mask_strategy == MaskStrategy::kSegmentedFish
                        ? std::max<std::size_t>(k / grid.workers, 1)
                        : k;
    }
    TrainConfig train_config = options.train;
    train_config.seed = job.seed;

    const ParamVector params0 = init_params(spec, job.seed);
    const DistResult result = run_distributed(spec, params0, train_data,
                                              eval_data, dist, train_config);
    curves[job.strategy][job.seed - options.base_seed] =
        accuracy_vs_budget(result);

    if (!options.out_dir.empty()) {
      const std::string path =
          (std::filesystem::path(options.out_dir) /
           ("dist_" + strategy_name + "_seed" + std::to_string(job.seed) +
            ".json"))
              .string();
      std::lock_guard<std::mutex> lock(io_mutex);
      std::filesystem::create_directories(options.out_dir);
      io::write_text_file(path, dist_result_to_json(result, dist));
    }
  });

  // One cell per (strategy, round): budgets are identical across seeds by
  // construction, accuracy varies.
  for (std::size_t s = 0; s < grid.strategies.size(); ++s) {
    for (std::size_t r = 0; r < grid.rounds; ++r) {
      CellResult cell;
      cell.key = {{"strategy", grid.strategies[s]},
                  {"round", std::to_string(r + 1)}};
      std::vector<double> accuracy(options.seeds);
      std::vector<double> upload(options.seeds);
      std::vector<double> updown(options.seeds);
      for (std::size_t i = 0; i < options.seeds; ++i) {
        const BudgetPoint& p = curves[s][i][r];
        accuracy[i] = p.eval_accuracy;
        upload[i] = p.upload_fme_per_worker;
        updown[i] = p.updown_fme_per_worker;
      }
      cell.per_seed["accuracy"] = accuracy;
      cell.per_seed["upload_fme_per_worker"] = upload;
      cell.per_seed["updown_fme_per_worker"] = updown;
      report.cells.push_back(std::move(cell));
    }
  }

  ordered_json config;
  config["task"] = ordered_json::parse(task.to_json());
  config["strategies"] = grid.strategies;
  config["sparsity"] = grid.sparsity;
  config["workers"] = grid.workers;
  config["local_updates"] = grid.local_updates;
  config["rounds"] = grid.rounds;
  config["warmup_epochs"] = grid.warmup_epochs;
  config["broadcast"] = to_string(grid.broadcast);
  config["fisher_samples"] = grid.fisher_samples;
  config["options"] = options_json(options);
  report.config_json = config.dump();
  report.wall_clock_seconds = elapsed_seconds(start);
  return report;
}

// ---------------------------------------------------------------------------
// checkpoint
// ---------------------------------------------------------------------------

ExperimentReport run_checkpoint_experiment(const TaskSpec& task,
                                           const CheckpointGrid& grid,
                                           const RunOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  if (grid.mask_kinds.empty() || grid.sparsities.empty() ||
      grid.schedules.empty() || options.seeds == 0) {
    throw ConfigError("checkpoint: empty grid");
  }
  const ModelSpec spec = task.model();
  const auto [train_data, eval_data] = task.train_eval();

  struct Cell {
    std::string kind;
    double sparsity;
    std::string schedule;
  };
  std::vector<Cell> cells;
  for (const std::string& kind : grid.mask_kinds) {
    for (double sparsity : grid.sparsities) {
      for (const std::string& schedule : grid.schedules) {
        cells.push_back({kind, sparsity, schedule});
      }
    }
  }

  struct Job {
    std::size_t cell;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (std::uint64_t seed : seed_list(options)) jobs.push_back({c, seed});
  }

  std::vector<std::vector<double>> acc(cells.size(),
                                       std::vector<double>(options.seeds));
  std::vector<std::vector<double>> disk_bytes(
      cells.size(), std::vector<double>(options.seeds));
  std::mutex io_mutex;

  run_parallel(jobs.size(), options.threads, [&](std::size_t j) {
    const Job& job = jobs[j];
    const Cell& cell = cells[job.cell];
    const std::size_t seed_slot = job.seed - options.base_seed;

    TrainConfig config = options.train;
    config.seed = job.seed;
    const ParamVector params0 = init_params(spec, job.seed);
    const MaskOrigin kind =
        cell.kind == "random" ? MaskOrigin::kRandom : MaskOrigin::kFish;
    const CheckpointTrainResult result = train_with_sparse_checkpoints(
        spec, params0, train_data, eval_data, cell.sparsity,
        refresh_schedule_from_string(cell.schedule), config,
        grid.fisher_samples, kind);

    // Every chain must reconstruct the live final vector bit-exactly.
    const ParamVector rebuilt = reconstruct(params0, result.checkpoints);
    if (std::memcmp(rebuilt.data(), result.params.data(),
                    rebuilt.size() * sizeof(double)) != 0) {
      throw DataError("checkpoint chain failed bit-exact reconstruction");
    }
    acc[job.cell][seed_slot] =
        result.metrics.records.back().eval_accuracy;

    // Write the first seed's chain to disk and re-verify it through the
    // file round trip.
    if (!options.out_dir.empty() && job.seed == options.base_seed) {
      std::ostringstream dir_name;
      dir_name << "chains/" << cell.kind << "_s"
               << format_double_key(cell.sparsity) << "_" << cell.schedule;
      const std::filesystem::path dir =
          std::filesystem::path(options.out_dir) / dir_name.str();
      {
        std::lock_guard<std::mutex> lock(io_mutex);
        std::filesystem::create_directories(dir);
      }
      save_params(params0, (dir / "base.params").string());
      save_params(result.params, (dir / "final.params").string());
      std::vector<std::string> files;
      for (const SparseCheckpoint& ckpt : result.checkpoints) {
        const std::string file = ckpt.id + ".bin";
        save_checkpoint(ckpt, spec.param_count, (dir / file).string());
        files.push_back(file);
      }
      save_chain_manifest(result.checkpoints, files, spec.param_count, "base",
                          (dir / "manifest.json").string());
      const std::vector<SparseCheckpoint> reloaded =
          load_chain((dir / "manifest.json").string());
      const ParamVector from_disk = reconstruct(params0, reloaded);
      if (std::memcmp(from_disk.data(), result.params.data(),
                      from_disk.size() * sizeof(double)) != 0) {
        throw DataError("on-disk chain failed bit-exact reconstruction");
      }
    }
    double bytes = 0.0;
    for (const SparseCheckpoint& ckpt : result.checkpoints) {
      bytes += static_cast<double>(storage_cost(ckpt, 8, 8));
    }
    disk_bytes[job.cell][seed_slot] =
        bytes / static_cast<double>(result.checkpoints.size());
  });

  ExperimentReport report;
  report.experiment = "checkpoint";
  report.version = kVersion;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const Cell& cell = cells[c];
    CellResult out;
    out.key = {{"mask", cell.kind},
               {"sparsity", format_double_key(cell.sparsity)},
               {"schedule", cell.schedule}};
    out.per_seed["accuracy"] = acc[c];

    // 32-bit cost model, payload bytes only (headers excluded from the
    // ratio): dense stores |theta| values, sparse k (index, value) pairs.
    const std::size_t k = sparsity_to_k(spec.param_count, cell.sparsity);
    const double sparse_payload = static_cast<double>(k) * (4.0 + 4.0);
    const double dense_payload = static_cast<double>(spec.param_count) * 4.0;
    out.per_seed["cost_model_bytes_per_ckpt"] =
        std::vector<double>(options.seeds, sparse_payload);
    out.per_seed["reduction_factor_32bit"] =
        std::vector<double>(options.seeds, dense_payload / sparse_payload);
    out.per_seed["disk_bytes_per_ckpt"] = disk_bytes[c];
    report.cells.push_back(std::move(out));
  }

  ordered_json config;
  config["task"] = ordered_json::parse(task.to_json());
  config["mask_kinds"] = grid.mask_kinds;
  config["sparsities"] = grid.sparsities;
  config["schedules"] = grid.schedules;
  config["fisher_samples"] = grid.fisher_samples;
  config["options"] = options_json(options);
  report.config_json = config.dump();
  report.wall_clock_seconds = elapsed_seconds(start);
  return report;
}

}  // namespace fishmask
