// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <set>
#include <vector>

#include "fishmask/errors.hpp"
#include "fishmask/mask.hpp"

using namespace fishmask;

namespace {

FisherDiag diag(std::vector<double> scores) {
  FisherDiag f;
  f.scores = std::move(scores);
  f.sample_count = 1;
  return f;
}

}  // namespace

TEST_SUITE("mask") {

TEST_CASE("sparsity_to_k") {
  CHECK(sparsity_to_k(1000, 0.005) == 5);
  CHECK(sparsity_to_k(67, 1.0) == 67);
  CHECK(sparsity_to_k(330000000, 0.005) == 1650000);
  CHECK(sparsity_to_k(1000, 1e-5) == 1);  // floor at one parameter
  CHECK_THROWS_AS(sparsity_to_k(1000, 0.0), ConfigError);
  CHECK_THROWS_AS(sparsity_to_k(1000, -0.1), ConfigError);
  CHECK_THROWS_AS(sparsity_to_k(1000, 1.5), ConfigError);
}

TEST_CASE("build_fish_mask: top-k selection and tie-breaking") {
  const SparseMask top2 = build_fish_mask(diag({0.1, 0.9, 0.4, 0.9}), 2);
  CHECK(top2.indices == std::vector<std::size_t>{1, 3});
  CHECK(top2.k == 2);
  CHECK(top2.origin == MaskOrigin::kFish);

  const SparseMask ties = build_fish_mask(diag({0.5, 0.5, 0.5}), 2);
  CHECK(ties.indices == std::vector<std::size_t>{0, 1});

  const SparseMask forced =
      build_fish_mask(diag({9, 8, 7, 6, 0, 0}), 3, IndexRange{4, 6});
  CHECK(forced.indices == std::vector<std::size_t>{0, 4, 5});

  CHECK_THROWS_AS(build_fish_mask(diag({1, 2, 3}), 0), ConfigError);
  CHECK_THROWS_AS(build_fish_mask(diag({1, 2, 3}), 4), ConfigError);
  CHECK_THROWS_AS(build_fish_mask(diag({1, 2, 3}), 1, IndexRange{0, 2}),
                  ConfigError);
}

TEST_CASE("build_fish_mask properties: dominance, scale invariance, "
          "cardinality") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> score(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> scores(97);
    for (double& s : scores) s = score(rng);
    const std::size_t k = 1 + static_cast<std::size_t>(rng() % 96);
    const SparseMask mask = build_fish_mask(diag(scores), k);

    REQUIRE(mask.indices.size() == k);
    CHECK(std::is_sorted(mask.indices.begin(), mask.indices.end()));
    CHECK(std::adjacent_find(mask.indices.begin(), mask.indices.end()) ==
          mask.indices.end());

    // Selected scores dominate unselected ones.
    double min_selected = 2.0;
    for (std::size_t i : mask.indices) {
      min_selected = std::min(min_selected, scores[i]);
    }
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (!mask.contains(i)) CHECK(scores[i] <= min_selected);
    }

    // Positive rescaling leaves the mask unchanged.
    std::vector<double> scaled = scores;
    for (double& s : scaled) s *= 17.5;
    CHECK(build_fish_mask(diag(scaled), k).indices == mask.indices);
  }
}

TEST_CASE("build_random_mask: determinism, full mask, forced inclusion") {
  const SparseMask full = build_random_mask(12, 12, 3);
  std::vector<std::size_t> all(12);
  for (std::size_t i = 0; i < 12; ++i) all[i] = i;
  CHECK(full.indices == all);

  const SparseMask a = build_random_mask(500, 25, 11);
  const SparseMask b = build_random_mask(500, 25, 11);
  CHECK(a.indices == b.indices);
  CHECK(a.indices.size() == 25);
  const SparseMask c = build_random_mask(500, 25, 12);
  CHECK(a.indices != c.indices);

  const SparseMask forced = build_random_mask(100, 10, 5, IndexRange{90, 95});
  for (std::size_t i = 90; i < 95; ++i) CHECK(forced.contains(i));
  CHECK(forced.indices.size() == 10);
}

TEST_CASE("build_random_mask: pairwise overlap matches hypergeometric "
          "expectation") {
  // E[|A op B|] = k^2 / n = 100^2 / 10^4 = 1; mean over 100 pairs within
  // +/- 50%.
  const std::size_t n = 10000, k = 100;
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const SparseMask a = build_random_mask(n, k, 2 * seed);
    const SparseMask b = build_random_mask(n, k, 2 * seed + 1);
    std::vector<std::size_t> common;
    std::set_intersection(a.indices.begin(), a.indices.end(),
                          b.indices.begin(), b.indices.end(),
                          std::back_inserter(common));
    total += static_cast<double>(common.size());
  }
  const double mean = total / 100.0;
  CHECK(mean > 0.5);
  CHECK(mean < 1.5);
}

TEST_CASE("segment_fisher_strided: strided pools partition the indices") {
  const auto pools = segment_fisher_strided(diag({1, 2, 3, 4, 5, 6}), 2);
  REQUIRE(pools.size() == 2);
  CHECK(pools[0] == std::vector<std::size_t>{0, 2, 4});
  CHECK(pools[1] == std::vector<std::size_t>{1, 3, 5});

  const auto odd = segment_fisher_strided(diag({1, 2, 3, 4, 5, 6, 7}), 2);
  CHECK(odd[0].size() == 4);
  CHECK(odd[1].size() == 3);

  std::set<std::size_t> seen;
  for (const auto& pool : odd) seen.insert(pool.begin(), pool.end());
  CHECK(seen.size() == 7);

  CHECK_THROWS_AS(segment_fisher_strided(diag({1, 2}), 1), ConfigError);
}

TEST_CASE("build_segmented_masks: per-pool top-k, pairwise disjoint") {
  const auto masks = build_segmented_masks(diag({9, 1, 8, 2, 7, 3}), 2, 2);
  REQUIRE(masks.size() == 2);
  CHECK(masks[0].indices == std::vector<std::size_t>{0, 2});
  CHECK(masks[1].indices == std::vector<std::size_t>{3, 5});
  CHECK(masks[0].origin == MaskOrigin::kSegment);
  CHECK(masks[0].worker_id == 0);
  CHECK(masks[1].worker_id == 1);
  CHECK(masks[0].workers == 2);

  // Disjointness over random scores.
  std::mt19937_64 rng(23);
  std::vector<double> scores(61);
  for (double& s : scores) s = std::uniform_real_distribution<>(0, 1)(rng);
  const auto random_masks = build_segmented_masks(diag(scores), 9, 3);
  std::set<std::size_t> seen;
  for (const auto& m : random_masks) {
    for (std::size_t i : m.indices) {
      CHECK(seen.insert(i).second);  // never seen before
    }
  }

  CHECK_THROWS_AS(build_segmented_masks(diag({1, 2, 3, 4}), 2, 1),
                  ConfigError);
  CHECK_THROWS_AS(build_segmented_masks(diag({1, 2, 3, 4, 5}), 3, 2),
                  ConfigError);  // pool 1 has only 2 entries
}

TEST_CASE("apply_mask extracts (index, value) pairs in index order") {
  SparseMask mask;
  mask.indices = {1, 3};
  mask.k = 2;
  const std::vector<double> grad = {5, 6, 7, 8};
  const SparseDelta delta = apply_mask(grad, mask);
  REQUIRE(delta.size() == 2);
  CHECK(delta[0] == SparseEntry{1, 6.0});
  CHECK(delta[1] == SparseEntry{3, 8.0});

  SparseMask full;
  for (std::size_t i = 0; i < 4; ++i) full.indices.push_back(i);
  full.k = 4;
  CHECK(apply_mask(grad, full).size() == 4);

  // Mask over grad's zero support extracts zeros.
  const std::vector<double> sparse_grad = {0, 0, 0, 9};
  SparseMask off_support;
  off_support.indices = {0, 2};
  off_support.k = 2;
  for (const SparseEntry& e : apply_mask(sparse_grad, off_support)) {
    CHECK(e.value == 0.0);
  }

  SparseMask oob;
  oob.indices = {9};
  oob.k = 1;
  CHECK_THROWS_AS(apply_mask(grad, oob), ConfigError);
}

TEST_CASE("mask binary and JSON round trip") {
  const SparseMask mask = build_fish_mask(diag({5, 1, 4, 2, 3, 0, 6}), 3);
  const auto path =
      (std::filesystem::temp_directory_path() / "fishmask_mask.bin").string();
  save_mask(mask, 7, path);
  std::size_t theta_len = 0;
  const SparseMask loaded = load_mask(path, &theta_len);
  CHECK(theta_len == 7);
  CHECK(loaded.indices == mask.indices);
  CHECK(loaded.origin == mask.origin);
  CHECK(loaded.k == mask.k);

  const std::string json = mask_to_json(mask);
  CHECK(json.find("\"fish\"") != std::string::npos);
  CHECK_THROWS_AS(load_mask("/nonexistent/mask.bin"), DataError);
}

}  // TEST_SUITE
