// SPDX-License-Identifier: Apache-2.0
#pragma once

// Diagonal Fisher information estimators. Three variants of the same
// per-parameter importance score:
//   empirical    squared score of the ground-truth label,
//   true_exact   expectation over classes computed by enumeration,
//   true_sampled expectation approximated with label draws.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fishmask/model.hpp"

namespace fishmask {

enum class FisherVariant : std::uint8_t {
  kEmpirical = 0,
  kTrueExact = 1,
  kTrueSampled = 2,
};

std::string to_string(FisherVariant v);
FisherVariant fisher_variant_from_string(const std::string& name);

struct FisherDiag {
  std::vector<double> scores;   // length |theta|, entrywise >= 0
  std::size_t sample_count = 0; // N, data examples used
  FisherVariant variant = FisherVariant::kEmpirical;
  std::uint32_t draws = 0;      // only meaningful for kTrueSampled
};

/// Mean squared score of the ground-truth labels over the first n_samples
/// examples of `data` (callers shuffle beforehand).
FisherDiag empirical_fisher(const ModelSpec& spec, const ParamVector& params,
                            std::span<const LabeledExample> data,
                            std::size_t n_samples);

/// Exact class expectation: (1/N) sum_i sum_y p(y|x_i) * score(x_i,y)^2.
FisherDiag true_fisher_exact(const ModelSpec& spec, const ParamVector& params,
                             std::span<const LabeledExample> data,
                             std::size_t n_samples);

/// Monte-Carlo class expectation with `draws` label samples per example.
/// Deterministic for a fixed seed.
FisherDiag true_fisher_sampled(const ModelSpec& spec,
                               const ParamVector& params,
                               std::span<const LabeledExample> data,
                               std::size_t n_samples, std::size_t draws,
                               std::uint64_t seed);

/// |topk(a) ∩ topk(b)| / k with the mask module's tie-break rule.
double fisher_rank_overlap(const FisherDiag& a, const FisherDiag& b,
                           std::size_t k);

// Binary export: magic, version, |theta|, N, variant, draws, then raw
// little-endian float64 scores.
void save_fisher(const FisherDiag& fisher, const std::string& path);
FisherDiag load_fisher(const std::string& path);

/// JSON summary: length, N, variant, min/max score, top-k indices.
std::string fisher_summary_json(const FisherDiag& fisher, std::size_t top_k);

}  // namespace fishmask
