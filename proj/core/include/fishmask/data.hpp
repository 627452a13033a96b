// SPDX-License-Identifier: Apache-2.0
#pragma once

// Deterministic dataset providers: synthetic generators (Gaussian blobs,
// two moons), IDX and CSV loaders, i.i.d. sharding and train/eval splits.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fishmask/model.hpp"

namespace fishmask {

struct Provenance {
  enum class Kind { kSynthetic, kFile };
  Kind kind = Kind::kSynthetic;
  std::string detail;  // e.g. "blobs(classes=4,...,seed=42)" or "file.csv"
};

struct Dataset {
  std::vector<LabeledExample> examples;
  std::size_t class_count = 0;
  std::size_t feature_dim = 0;
  Provenance provenance;

  std::size_t size() const { return examples.size(); }
};

/// Gaussian blobs: class c's points are drawn around a deterministic center
/// at distance `center_separation` from the origin along a signed axis
/// direction. Deterministic for a fixed seed.
Dataset gen_blobs(std::size_t classes, std::size_t per_class,
                  std::size_t feature_dim, double center_separation,
                  double noise_sigma, std::uint64_t seed);

/// Classic interleaved half-circles in 2D, two classes.
Dataset gen_moons(std::size_t per_class, double noise_sigma,
                  std::uint64_t seed);

/// Seed-shuffle then round-robin split into M shards: disjoint, exhaustive,
/// sizes differ by at most 1.
std::vector<Dataset> shard_iid(const Dataset& dataset, std::size_t workers,
                               std::uint64_t seed);

/// Seed-shuffled split; eval gets round(eval_fraction * size) examples.
std::pair<Dataset, Dataset> split_train_eval(const Dataset& dataset,
                                             double eval_fraction,
                                             std::uint64_t seed);

/// IDX image/label pair (big-endian headers, magics 0x803 / 0x801).
/// Pixels are scaled to [0,1]. limit = 0 loads everything.
Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path, std::size_t limit = 0);

/// Numeric CSV with one integer label column; a non-numeric first row is
/// treated as a header.
Dataset load_csv(const std::string& path, std::size_t label_column);

}  // namespace fishmask
