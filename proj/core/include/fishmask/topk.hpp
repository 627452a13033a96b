// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

namespace fishmask {

// Indices of the k largest scores, ties at the cutoff broken by lower index
// first. Result is sorted ascending. This is the single tie-break rule used
// by every mask constructor and by rank-overlap comparisons.
inline std::vector<std::size_t> topk_indices(std::span<const double> scores,
                                             std::size_t k) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<long>(k),
                    order.end(), [&](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace fishmask
