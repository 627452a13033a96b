// SPDX-License-Identifier: Apache-2.0
#pragma once

// Sparse delta checkpointing: one checkpoint per epoch storing (index,
// value) pairs for the mask-covered coordinates, a mask-refresh schedule,
// chain reconstruction, and the storage-cost model.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fishmask/data.hpp"
#include "fishmask/fisher.hpp"
#include "fishmask/mask.hpp"
#include "fishmask/trainer.hpp"

namespace fishmask {

struct SparseCheckpoint {
  std::string id;        // e.g. "ckpt-000003"
  std::string base_ref;  // id of the preceding checkpoint or base snapshot
  std::size_t step = 0;
  std::uint64_t mask_id = 0;
  std::vector<std::size_t> indices;  // strictly increasing
  std::vector<double> values;        // new parameter values at those indices
};

struct RefreshSchedule {
  std::size_t period_epochs = 1;
  bool fixed = false;

  static RefreshSchedule every(std::size_t epochs);
  static RefreshSchedule fixed_forever();
};

RefreshSchedule refresh_schedule_from_string(const std::string& name);
std::string to_string(const RefreshSchedule& schedule);

struct CheckpointTrainResult {
  ParamVector params;
  std::vector<SparseCheckpoint> checkpoints;  // one per epoch
  TrainMetrics metrics;
  std::vector<SparseMask> masks;  // masks[mask_id] is the mask of that id
};

/// Masked training that rebuilds the FISH mask (fresh empirical Fisher at
/// the current parameters) at each schedule boundary and writes one sparse
/// checkpoint per epoch covering the active mask's coordinates.
CheckpointTrainResult train_with_sparse_checkpoints(
    const ModelSpec& spec, const ParamVector& params0,
    const Dataset& train_data, const Dataset& eval_data, double sparsity,
    const RefreshSchedule& schedule, const TrainConfig& config,
    std::size_t fisher_samples = 1024,
    MaskOrigin mask_kind = MaskOrigin::kFish);

/// Applies an unbroken base_ref chain of checkpoints to the base snapshot.
/// Bit-exact inverse of the storage scheme.
ParamVector reconstruct(const ParamVector& base,
                        std::span<const SparseCheckpoint> chain);

/// Bytes for one sparse checkpoint under the given unit sizes, including
/// the fixed header overhead.
std::size_t storage_cost(const SparseCheckpoint& checkpoint,
                         std::size_t unit_bytes_value,
                         std::size_t unit_bytes_index);

/// Bytes for a dense snapshot of |theta| values, same header overhead.
std::size_t dense_storage_cost(std::size_t theta_len,
                               std::size_t unit_bytes_value);

/// Fixed per-file overhead (header + trailing checksum) used by the cost
/// model.
std::size_t checkpoint_overhead_bytes();

// Binary checkpoint file: magic, version, |theta|, step, mask_id, base_ref
// hash, k, index block, value block, trailing FNV-1a checksum of all
// preceding bytes. Writes are atomic (temp + rename).
void save_checkpoint(const SparseCheckpoint& checkpoint, std::size_t theta_len,
                     const std::string& path);
SparseCheckpoint load_checkpoint(const std::string& path,
                                 std::size_t* theta_len_out = nullptr);

/// JSON manifest for a chain of checkpoint files.
void save_chain_manifest(std::span<const SparseCheckpoint> chain,
                         std::span<const std::string> files,
                         std::size_t theta_len, const std::string& base_id,
                         const std::string& path);

struct ChainManifest {
  struct Entry {
    std::string file;
    std::string id;
    std::string base_ref;
  };
  std::size_t theta_len = 0;
  std::string base_id;
  std::vector<Entry> entries;  // in chain order
};

ChainManifest load_chain_manifest(const std::string& path);

/// Loads every checkpoint named by the manifest (paths resolved relative to
/// the manifest's directory), restores ids, and validates each file's
/// base_ref hash against the manifest.
std::vector<SparseCheckpoint> load_chain(const std::string& manifest_path);

}  // namespace fishmask
