// SPDX-License-Identifier: Apache-2.0
#pragma once

// Fixed sparse update masks: top-k by Fisher score, random baseline, and
// strided nonoverlapping segmentation across workers.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fishmask/fisher.hpp"
#include "fishmask/model.hpp"

namespace fishmask {

enum class MaskOrigin : std::uint8_t { kFish = 0, kRandom = 1, kSegment = 2 };

std::string to_string(MaskOrigin origin);

struct SparseMask {
  std::vector<std::size_t> indices;  // strictly increasing, in [0, |theta|)
  std::size_t k = 0;                 // == indices.size()
  MaskOrigin origin = MaskOrigin::kFish;
  std::uint32_t worker_id = 0;       // kSegment only
  std::uint32_t workers = 0;         // kSegment only

  bool contains(std::size_t index) const;
};

/// k = round(fraction * total_params), at least 1. fraction in (0, 1].
std::size_t sparsity_to_k(std::size_t total_params, double sparsity_fraction);

/// Forced inclusions (e.g. the classifier slice) count toward k; the
/// remaining k - |always_include| slots take the largest Fisher scores,
/// ties broken by lower index.
SparseMask build_fish_mask(const FisherDiag& fisher, std::size_t k,
                           std::optional<IndexRange> always_include = {});

/// Uniform sample without replacement from the non-forced indices, plus the
/// forced inclusions. Deterministic for a fixed seed.
SparseMask build_random_mask(std::size_t total_params, std::size_t k,
                             std::uint64_t seed,
                             std::optional<IndexRange> always_include = {});

/// Strided pools: pool i = {workers*n + i}. Pools partition [0, |theta|).
std::vector<std::vector<std::size_t>> segment_fisher_strided(
    const FisherDiag& fisher, std::size_t workers);

/// Worker i's mask is the top k_per_worker of its strided pool; masks are
/// pairwise disjoint. Forced inclusions are routed to the pool that owns
/// them and count toward that worker's k.
std::vector<SparseMask> build_segmented_masks(
    const FisherDiag& fisher, std::size_t k_per_worker, std::size_t workers,
    std::optional<IndexRange> always_include = {});

struct SparseEntry {
  std::size_t index = 0;
  double value = 0.0;

  bool operator==(const SparseEntry&) const = default;
};

/// (index, value) pairs — the unit of both communication and checkpoint
/// storage.
using SparseDelta = std::vector<SparseEntry>;

/// Extracts grad values at mask indices, in index order.
SparseDelta apply_mask(std::span<const double> grad, const SparseMask& mask);

// Binary form: magic, version, |theta|, k, origin, worker_id, workers, then
// k little-endian uint64 indices (strictly increasing).
void save_mask(const SparseMask& mask, std::size_t theta_len,
               const std::string& path);
SparseMask load_mask(const std::string& path,
                     std::size_t* theta_len_out = nullptr);

std::string mask_to_json(const SparseMask& mask);

}  // namespace fishmask
