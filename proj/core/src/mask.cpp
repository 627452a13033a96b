// SPDX-License-Identifier: Apache-2.0
#include "fishmask/mask.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

#include <json.hpp>

#include "fishmask/errors.hpp"
#include "fishmask/io.hpp"
#include "fishmask/rng.hpp"
#include "fishmask/topk.hpp"

namespace fishmask {

std::string to_string(MaskOrigin origin) {
  switch (origin) {
    case MaskOrigin::kFish: return "fish";
    case MaskOrigin::kRandom: return "random";
    case MaskOrigin::kSegment: return "segment";
  }
  return "unknown";
}

bool SparseMask::contains(std::size_t index) const {
  return std::binary_search(indices.begin(), indices.end(), index);
}

std::size_t sparsity_to_k(std::size_t total_params, double sparsity_fraction) {
  if (!(sparsity_fraction > 0.0) || sparsity_fraction > 1.0) {
    throw ConfigError("sparsity fraction must be in (0, 1], got " +
                      std::to_string(sparsity_fraction));
  }
  const auto k = static_cast<std::size_t>(
      std::llround(sparsity_fraction * static_cast<double>(total_params)));
  return std::max<std::size_t>(k, 1);
}

namespace {

void check_k(std::size_t k, std::size_t total, std::size_t forced) {
  if (k == 0 || k > total) {
    throw ConfigError("mask size k=" + std::to_string(k) +
                      " out of range for |theta|=" + std::to_string(total));
  }
  if (k < forced) {
    throw ConfigError("mask size k=" + std::to_string(k) +
                      " smaller than forced inclusion size " +
                      std::to_string(forced));
  }
}

void validate_range(const std::optional<IndexRange>& range,
                    std::size_t total) {
  if (range && (range->begin > range->end || range->end > total)) {
    throw ConfigError("always_include range invalid for |theta|=" +
                      std::to_string(total));
  }
}

}  // namespace

SparseMask build_fish_mask(const FisherDiag& fisher, std::size_t k,
                           std::optional<IndexRange> always_include) {
  const std::size_t total = fisher.scores.size();
  validate_range(always_include, total);
  const std::size_t forced =
      always_include ? always_include->size() : std::size_t{0};
  check_k(k, total, forced);

  SparseMask mask;
  mask.origin = MaskOrigin::kFish;
  mask.k = k;

  if (forced == 0) {
    mask.indices = topk_indices(fisher.scores, k);
    return mask;
  }

  // Rank the non-forced indices only; forced ones are in unconditionally.
  std::vector<double> scores(fisher.scores.begin(), fisher.scores.end());
  for (std::size_t i = always_include->begin; i < always_include->end; ++i) {
    scores[i] = -1.0;  // below any real (nonnegative) score
  }
  mask.indices = topk_indices(scores, k - forced);
  for (std::size_t i = always_include->begin; i < always_include->end; ++i) {
    mask.indices.push_back(i);
  }
  std::sort(mask.indices.begin(), mask.indices.end());
  return mask;
}

SparseMask build_random_mask(std::size_t total_params, std::size_t k,
                             std::uint64_t seed,
                             std::optional<IndexRange> always_include) {
  validate_range(always_include, total_params);
  const std::size_t forced =
      always_include ? always_include->size() : std::size_t{0};
  check_k(k, total_params, forced);

  std::vector<std::size_t> pool;
  pool.reserve(total_params - forced);
  for (std::size_t i = 0; i < total_params; ++i) {
    if (always_include && always_include->contains(i)) continue;
    pool.push_back(i);
  }

  // Partial Fisher-Yates: only the first k - forced slots are needed.
  auto rng = make_rng(seed, Stream::kRandomMask);
  const std::size_t need = k - forced;
  for (std::size_t i = 0; i < need; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }

  SparseMask mask;
  mask.origin = MaskOrigin::kRandom;
  mask.k = k;
  mask.indices.assign(pool.begin(), pool.begin() + static_cast<long>(need));
  if (always_include) {
    for (std::size_t i = always_include->begin; i < always_include->end; ++i) {
      mask.indices.push_back(i);
    }
  }
  std::sort(mask.indices.begin(), mask.indices.end());
  return mask;
}

std::vector<std::vector<std::size_t>> segment_fisher_strided(
    const FisherDiag& fisher, std::size_t workers) {
  if (workers < 2) {
    throw ConfigError("segmentation needs at least 2 workers");
  }
  std::vector<std::vector<std::size_t>> pools(workers);
  for (std::size_t i = 0; i < fisher.scores.size(); ++i) {
    pools[i % workers].push_back(i);
  }
  return pools;
}

std::vector<SparseMask> build_segmented_masks(
    const FisherDiag& fisher, std::size_t k_per_worker, std::size_t workers,
    std::optional<IndexRange> always_include) {
  validate_range(always_include, fisher.scores.size());
  const auto pools = segment_fisher_strided(fisher, workers);

  std::vector<SparseMask> masks(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::vector<std::size_t>& pool = pools[w];

    std::vector<std::size_t> forced;
    if (always_include) {
      for (std::size_t i : pool) {
        if (always_include->contains(i)) forced.push_back(i);
      }
    }
    if (k_per_worker > pool.size()) {
      throw ConfigError("k_per_worker " + std::to_string(k_per_worker) +
                        " exceeds pool size " + std::to_string(pool.size()) +
                        " of worker " + std::to_string(w));
    }
    if (k_per_worker < forced.size()) {
      throw ConfigError("k_per_worker smaller than forced inclusions routed "
                        "to worker " + std::to_string(w));
    }

    // Top-k within the pool, ranked by global Fisher score with the global
    // index as the tie-break (pool order preserves index order).
    std::vector<double> pool_scores(pool.size());
    for (std::size_t n = 0; n < pool.size(); ++n) {
      const bool is_forced =
          always_include && always_include->contains(pool[n]);
      pool_scores[n] = is_forced ? -1.0 : fisher.scores[pool[n]];
    }
    const std::vector<std::size_t> picked =
        topk_indices(pool_scores, k_per_worker - forced.size());

    SparseMask& mask = masks[w];
    mask.origin = MaskOrigin::kSegment;
    mask.k = k_per_worker;
    mask.worker_id = static_cast<std::uint32_t>(w);
    mask.workers = static_cast<std::uint32_t>(workers);
    mask.indices = forced;
    for (std::size_t n : picked) mask.indices.push_back(pool[n]);
    std::sort(mask.indices.begin(), mask.indices.end());
  }
  return masks;
}

SparseDelta apply_mask(std::span<const double> grad, const SparseMask& mask) {
  if (!mask.indices.empty() && mask.indices.back() >= grad.size()) {
    throw ConfigError("mask index " + std::to_string(mask.indices.back()) +
                      " out of range for vector of length " +
                      std::to_string(grad.size()));
  }
  SparseDelta delta;
  delta.reserve(mask.indices.size());
  for (std::size_t i : mask.indices) delta.push_back({i, grad[i]});
  return delta;
}

namespace {
constexpr char kMaskMagic[8] = {'F', 'I', 'S', 'H', 'M', 'A', 'S', 'K'};
constexpr std::uint32_t kMaskFormatVersion = 1;
}  // namespace

void save_mask(const SparseMask& mask, std::size_t theta_len,
               const std::string& path) {
  io::atomic_write(path, [&](std::ostream& os) {
    io::ChecksummedWriter w(os);
    w.write_raw(kMaskMagic, sizeof(kMaskMagic));
    w.write<std::uint32_t>(kMaskFormatVersion);
    w.write<std::uint64_t>(theta_len);
    w.write<std::uint64_t>(mask.indices.size());
    w.write<std::uint8_t>(static_cast<std::uint8_t>(mask.origin));
    w.write<std::uint32_t>(mask.worker_id);
    w.write<std::uint32_t>(mask.workers);
    for (std::size_t i : mask.indices) w.write<std::uint64_t>(i);
  });
}

SparseMask load_mask(const std::string& path, std::size_t* theta_len_out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  io::ChecksummedReader r(is, path);

  char magic[8];
  r.read_raw(magic, sizeof(magic));
  if (std::memcmp(magic, kMaskMagic, sizeof(magic)) != 0) {
    throw DataError(path + ": bad magic at offset 0");
  }
  const auto version = r.read<std::uint32_t>();
  if (version != kMaskFormatVersion) {
    throw DataError(path + ": unsupported version " + std::to_string(version));
  }
  const auto theta_len = r.read<std::uint64_t>();
  if (theta_len_out) *theta_len_out = theta_len;

  SparseMask mask;
  mask.k = r.read<std::uint64_t>();
  const auto origin = r.read<std::uint8_t>();
  if (origin > 2) throw DataError(path + ": bad origin tag");
  mask.origin = static_cast<MaskOrigin>(origin);
  mask.worker_id = r.read<std::uint32_t>();
  mask.workers = r.read<std::uint32_t>();
  mask.indices.resize(mask.k);
  std::size_t prev = 0;
  for (std::size_t n = 0; n < mask.k; ++n) {
    const auto idx = r.read<std::uint64_t>();
    if (idx >= theta_len || (n > 0 && idx <= prev)) {
      throw DataError(path + ": indices not strictly increasing / in range");
    }
    mask.indices[n] = idx;
    prev = idx;
  }
  return mask;
}

std::string mask_to_json(const SparseMask& mask) {
  nlohmann::json j;
  j["k"] = mask.k;
  j["origin"] = to_string(mask.origin);
  if (mask.origin == MaskOrigin::kSegment) {
    j["worker_id"] = mask.worker_id;
    j["workers"] = mask.workers;
  }
  j["indices"] = mask.indices;
  return j.dump();
}

}  // namespace fishmask
