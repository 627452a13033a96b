// SPDX-License-Identifier: Apache-2.0
//
// Experiment driver. Subcommands mirror the study shapes: single Fisher
// exports, sparsity sweeps, sample-count and Fisher-variant ablations,
// distributed budget curves, checkpoint schedule grids, and chain
// reconstruction.

#include <cstring>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fishmask/errors.hpp"
#include "fishmask/experiments.hpp"
#include "fishmask/version.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct CommonArgs {
  std::string task = "blobs-ref";
  std::size_t seeds = 5;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  std::string out_dir = "out";
  double lr = 0.1;
  std::size_t batch_size = 16;
  std::size_t epochs = 50;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--task", args.task,
                  "builtin task name (blobs-ref, moons-small) or task JSON "
                  "path");
  cmd->add_option("--seeds", args.seeds, "number of seeds to run");
  cmd->add_option("--seed", args.seed, "base seed (runs use seed, seed+1, ...)");
  cmd->add_option("--threads", args.threads,
                  "seed-level parallelism; never affects results");
  cmd->add_option("--out-dir", args.out_dir, "output directory");
  cmd->add_option("--lr", args.lr, "SGD learning rate");
  cmd->add_option("--batch-size", args.batch_size, "minibatch size");
  cmd->add_option("--epochs", args.epochs, "training epochs per run");
}

fishmask::RunOptions make_options(const CommonArgs& args) {
  fishmask::RunOptions options;
  options.seeds = args.seeds;
  options.base_seed = args.seed;
  options.threads = args.threads;
  options.out_dir = args.out_dir;
  options.train.learning_rate = args.lr;
  options.train.batch_size = args.batch_size;
  options.train.epochs = args.epochs;
  return options;
}

void finish(const fishmask::ExperimentReport& report,
            const std::string& out_dir) {
  const std::string path = fishmask::write_report(report, out_dir);
  std::cout << "wrote " << path << " (" << report.cells.size() << " cells, "
            << report.wall_clock_seconds << " s)\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FISH-mask training toolkit"};
  app.set_version_flag("--version", fishmask::kVersion);
  app.require_subcommand(1);

  // fisher -------------------------------------------------------------
  auto* cmd_fisher = app.add_subcommand(
      "fisher", "estimate a Fisher diagonal and write binary + JSON summary");
  CommonArgs fisher_args;
  add_common(cmd_fisher, fisher_args);
  std::string fisher_variant = "empirical";
  std::size_t fisher_samples = 1024;
  std::size_t fisher_draws = 1;
  cmd_fisher->add_option("--variant", fisher_variant,
                         "empirical | true_exact | true_sampled");
  cmd_fisher->add_option("--samples", fisher_samples,
                         "N, data examples used (clamped to dataset size)");
  cmd_fisher->add_option("--draws", fisher_draws,
                         "label draws per example (true_sampled)");

  // sweep-sparsity -------------------------------------------------------
  auto* cmd_sweep = app.add_subcommand(
      "sweep-sparsity", "train fish/random masks over a sparsity grid");
  CommonArgs sweep_args;
  add_common(cmd_sweep, sweep_args);
  std::vector<double> sweep_sparsities = {0.005, 0.02, 0.1};
  std::vector<std::string> sweep_kinds = {"fish", "random"};
  std::size_t sweep_fisher_samples = 1024;
  bool sweep_include_classifier = false;
  cmd_sweep->add_option("--sparsities", sweep_sparsities,
                        "mask sparsity levels in (0, 1]")
      ->delimiter(',');
  cmd_sweep->add_option("--mask-kinds", sweep_kinds, "fish and/or random")
      ->delimiter(',');
  cmd_sweep->add_option("--fisher-samples", sweep_fisher_samples,
                        "N for the mask's Fisher estimate");
  cmd_sweep->add_flag("--include-classifier", sweep_include_classifier,
                      "always include the classifier layer in masks");

  // ablate-samples -------------------------------------------------------
  auto* cmd_ablate = app.add_subcommand(
      "ablate-samples", "accuracy and mask overlap vs Fisher sample count");
  CommonArgs ablate_args;
  add_common(cmd_ablate, ablate_args);
  std::vector<std::size_t> ablate_counts = {0, 1, 8, 32, 256, 1024};
  double ablate_sparsity = 0.02;
  cmd_ablate->add_option("--samples", ablate_counts,
                         "sorted sample counts; 0 = random-mask baseline")
      ->delimiter(',');
  cmd_ablate->add_option("--sparsity", ablate_sparsity, "mask sparsity");

  // ablate-fisher-type ----------------------------------------------------
  auto* cmd_variant = app.add_subcommand(
      "ablate-fisher-type", "empirical vs exact (vs sampled) Fisher masks");
  CommonArgs variant_args;
  add_common(cmd_variant, variant_args);
  double variant_sparsity = 0.1;
  std::size_t variant_fisher_samples = 1024;
  std::size_t variant_draws = 0;
  cmd_variant->add_option("--sparsity", variant_sparsity, "mask sparsity");
  cmd_variant->add_option("--fisher-samples", variant_fisher_samples,
                          "N for the Fisher estimates");
  cmd_variant->add_option("--draws", variant_draws,
                          "also run true_sampled with this many draws");

  // distributed ------------------------------------------------------------
  auto* cmd_dist = app.add_subcommand(
      "distributed", "M-worker simulation with communication ledger");
  CommonArgs dist_args;
  add_common(cmd_dist, dist_args);
  fishmask::DistributedGrid dist_grid;
  std::string dist_broadcast = "auto_min";
  cmd_dist->add_option("--strategies", dist_grid.strategies,
                       "dense, shared_fish, shared_random, segmented_fish")
      ->delimiter(',');
  cmd_dist->add_option("--sparsity", dist_grid.sparsity, "mask sparsity");
  cmd_dist->add_option("--workers", dist_grid.workers, "worker count M");
  cmd_dist->add_option("--local-updates", dist_grid.local_updates,
                       "updates per worker per round");
  cmd_dist->add_option("--rounds", dist_grid.rounds, "communication rounds");
  cmd_dist->add_option("--warmup-epochs", dist_grid.warmup_epochs,
                       "dense single-machine epochs before round 1");
  cmd_dist->add_option("--broadcast", dist_broadcast,
                       "full_vector | peer_deltas | auto_min");
  cmd_dist->add_option("--fisher-samples", dist_grid.fisher_samples,
                       "N for the server's Fisher estimate");

  // checkpoint -------------------------------------------------------------
  auto* cmd_ckpt = app.add_subcommand(
      "checkpoint", "sparse delta checkpointing over schedule grid");
  CommonArgs ckpt_args;
  add_common(cmd_ckpt, ckpt_args);
  fishmask::CheckpointGrid ckpt_grid;
  cmd_ckpt->add_option("--mask-kinds", ckpt_grid.mask_kinds,
                       "fish and/or random")
      ->delimiter(',');
  cmd_ckpt->add_option("--sparsities", ckpt_grid.sparsities, "sparsity levels")
      ->delimiter(',');
  cmd_ckpt->add_option("--schedules", ckpt_grid.schedules,
                       "mask refresh periods in epochs, or 'fixed'")
      ->delimiter(',');
  cmd_ckpt->add_option("--fisher-samples", ckpt_grid.fisher_samples,
                       "N for mask refreshes");

  // reconstruct --------------------------------------------------------------
  auto* cmd_rec = app.add_subcommand(
      "reconstruct", "rebuild parameters from a base snapshot and a chain");
  std::string rec_base, rec_manifest, rec_out, rec_expect;
  cmd_rec->add_option("--base", rec_base, "base .params file")->required();
  cmd_rec->add_option("--manifest", rec_manifest, "chain manifest JSON")
      ->required();
  cmd_rec->add_option("--out", rec_out, "output .params file")->required();
  cmd_rec->add_option("--expect", rec_expect,
                      "optional .params file that must match bit-exactly");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_fisher->parsed()) {
      const auto task = fishmask::load_task(fisher_args.task);
      const auto result = fishmask::run_fisher_export(
          task, fishmask::fisher_variant_from_string(fisher_variant),
          fisher_samples, fisher_draws, make_options(fisher_args));
      std::cout << "wrote " << result.binary_path << " and "
                << result.summary_path << " (N=" << result.clamped_samples
                << ")\n";
    } else if (cmd_sweep->parsed()) {
      const auto task = fishmask::load_task(sweep_args.task);
      finish(fishmask::run_sweep_sparsity(
                 task, sweep_sparsities, sweep_kinds, make_options(sweep_args),
                 sweep_fisher_samples, sweep_include_classifier),
             sweep_args.out_dir);
    } else if (cmd_ablate->parsed()) {
      const auto task = fishmask::load_task(ablate_args.task);
      finish(fishmask::run_ablate_samples(task, ablate_sparsity, ablate_counts,
                                          make_options(ablate_args)),
             ablate_args.out_dir);
    } else if (cmd_variant->parsed()) {
      const auto task = fishmask::load_task(variant_args.task);
      finish(fishmask::run_ablate_fisher_type(
                 task, variant_sparsity, make_options(variant_args),
                 variant_fisher_samples, variant_draws),
             variant_args.out_dir);
    } else if (cmd_dist->parsed()) {
      const auto task = fishmask::load_task(dist_args.task);
      dist_grid.broadcast =
          fishmask::broadcast_mode_from_string(dist_broadcast);
      finish(fishmask::run_distributed_experiment(task, dist_grid,
                                                  make_options(dist_args)),
             dist_args.out_dir);
    } else if (cmd_ckpt->parsed()) {
      const auto task = fishmask::load_task(ckpt_args.task);
      finish(fishmask::run_checkpoint_experiment(task, ckpt_grid,
                                                 make_options(ckpt_args)),
             ckpt_args.out_dir);
    } else if (cmd_rec->parsed()) {
      const auto base = fishmask::load_params(rec_base);
      const auto chain = fishmask::load_chain(rec_manifest);
      const auto params = fishmask::reconstruct(base, chain);
      fishmask::save_params(params, rec_out);
      std::cout << "wrote " << rec_out << " (" << params.size()
                << " parameters, " << chain.size() << " checkpoints)\n";
      if (!rec_expect.empty()) {
        const auto expect = fishmask::load_params(rec_expect);
        if (expect.size() != params.size() ||
            std::memcmp(expect.data(), params.data(),
                        params.size() * sizeof(double)) != 0) {
          throw fishmask::DataError("reconstructed parameters do not match " +
                                    rec_expect);
        }
        std::cout << "verified bit-exact against " << rec_expect << "\n";
      }
    }
  } catch (const fishmask::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const fishmask::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const fishmask::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}
