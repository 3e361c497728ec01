#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <unordered_set>
#include <vector>

#include <Eigen/Core>

namespace ttgp::detail {

/// k distinct integers drawn uniformly from [0, n), in draw order.
inline std::vector<Eigen::Index> sample_distinct(Eigen::Index n, Eigen::Index k,
                                                 std::mt19937_64& rng) {
  std::vector<Eigen::Index> out;
  if (k <= 0) return out;
  if (2 * k >= n) {
    std::vector<Eigen::Index> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), Eigen::Index{0});
    // Partial Fisher-Yates; std::shuffle's exact sequence is library specific.
    for (Eigen::Index i = 0; i < k; ++i) {
      std::uniform_int_distribution<Eigen::Index> pick(i, n - 1);
      std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(pick(rng))]);
    }
    all.resize(static_cast<std::size_t>(k));
    return all;
  }
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  std::unordered_set<Eigen::Index> seen;
  while (static_cast<Eigen::Index>(out.size()) < k) {
    const Eigen::Index v = pick(rng);
    if (seen.insert(v).second) out.push_back(v);
  }
  return out;
}

}  // namespace ttgp::detail
