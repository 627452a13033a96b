// SPDX-License-Identifier: Apache-2.0
#pragma once

// M-worker distributed training simulation: local update bursts, sparse
// delta exchange, sum aggregation on a central server, and an exact
// communication-cost ledger. One dense parameter transmission costs 1
// scalar unit; one sparse (index, value) pair costs 2.

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fishmask/data.hpp"
#include "fishmask/mask.hpp"
#include "fishmask/trainer.hpp"

namespace fishmask {

enum class MaskStrategy { kDense, kSharedFish, kSharedRandom, kSegmentedFish };
enum class BroadcastMode { kFullVector, kPeerDeltas, kAutoMin };
enum class Aggregation { kSum, kAverage };

std::string to_string(MaskStrategy s);
std::string to_string(BroadcastMode m);
MaskStrategy mask_strategy_from_string(const std::string& name);
BroadcastMode broadcast_mode_from_string(const std::string& name);

struct DistConfig {
  std::size_t workers = 2;
  std::size_t local_updates = 1;
  std::size_t rounds = 1;
  MaskStrategy mask_strategy = MaskStrategy::kDense;
  std::size_t mask_k = 0;            // shared k, or k per worker if segmented
  std::uint64_t random_mask_seed = 0;
  std::size_t warmup_epochs = 0;     // dense single-machine epochs first
  BroadcastMode server_broadcast = BroadcastMode::kAutoMin;
  Aggregation aggregation = Aggregation::kSum;
  std::size_t fisher_samples = 256;
};

struct CommLedger {
  double worker_to_server_units = 0.0;
  double server_to_worker_units = 0.0;

  double total_units() const {
    return worker_to_server_units + server_to_worker_units;
  }
  double full_model_equivalents(std::size_t theta_len) const {
    return total_units() / static_cast<double>(theta_len);
  }
};

struct RoundRecord {
  std::size_t round = 0;  // 1-based
  double w2s_units = 0.0;
  double s2w_units = 0.0;
  double eval_accuracy = 0.0;
};

struct DistResult {
  ParamVector params;
  CommLedger ledger;
  std::vector<RoundRecord> rounds;
  double final_accuracy = 0.0;
  std::vector<SparseMask> masks;  // per worker for segmented, one if shared
  std::size_t theta_len = 0;
  std::size_t workers = 0;
  // Exchange of the final round, in worker order; lets callers verify the
  // broadcast-reconstruction contract.
  std::vector<SparseDelta> last_round_deltas;
  ParamVector params_before_last_round;
};

/// Cost of one communication round under the configured strategy and
/// broadcast mode. masks is empty for the dense strategy.
std::pair<double, double> comm_cost_round(const DistConfig& config,
                                          std::span<const SparseMask> masks,
                                          std::size_t theta_len);

DistResult run_distributed(const ModelSpec& spec, const ParamVector& params0,
                           const Dataset& data, const Dataset& eval_data,
                           const DistConfig& dist_config,
                           const TrainConfig& train_config);

/// Reference reconstruction a worker performs from broadcast peer deltas:
/// applies every worker's delta to the previous server vector in worker
/// order. Matches the server bit-exactly.
ParamVector reconstruct_from_peer_deltas(
    const ParamVector& server_before,
    std::span<const SparseDelta> deltas_in_worker_order);

struct BudgetPoint {
  std::size_t round = 0;
  double upload_fme_per_worker = 0.0;  // cumulative w2s / (M * |theta|)
  double updown_fme_per_worker = 0.0;  // cumulative (w2s + s2w) / (M * |theta|)
  double eval_accuracy = 0.0;
};

/// Accuracy against cumulative communication budget, in both per-worker
/// conventions (upload-only and upload+download).
std::vector<BudgetPoint> accuracy_vs_budget(const DistResult& result);

/// JSON document: config echo, per-round ledger/accuracy, budget curves,
/// and a header naming the ledger conventions.
std::string dist_result_to_json(const DistResult& result,
                                const DistConfig& config);

}  // namespace fishmask
