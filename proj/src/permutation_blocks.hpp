#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "pad/preference.hpp"

namespace pad::detail {

// Rankings are processed in fixed-size lexicographic blocks. The block layout
// depends only on n, so per-block partial sums reduce in the same order for
// any thread count.
inline constexpr std::uint64_t kPermutationBlock = 720;

inline std::uint64_t block_count(std::uint64_t total) {
  return (total + kPermutationBlock - 1) / kPermutationBlock;
}

template <class Fn>
void visit_block(std::size_t n, std::uint64_t block, std::uint64_t total, Fn&& fn) {
  const std::uint64_t begin = block * kPermutationBlock;
  const std::uint64_t end = std::min(total, begin + kPermutationBlock);
  auto perm = unrank_permutation(n, begin);
  for (std::uint64_t idx = begin; idx < end; ++idx) {
    fn(idx, static_cast<const std::vector<std::size_t>&>(perm));
    std::next_permutation(perm.begin(), perm.end());
  }
}

// log PL probability of `order` for already-scaled utilities x = beta * r.
inline double pl_log_prob_scaled(const double* x, const std::size_t* order, std::size_t n) {
  if (n == 0) return 0.0;
  double suffix = x[order[n - 1]];
  double total = 0.0;
  for (std::size_t i = n - 1; i-- > 0;) {
    const double xi = x[order[i]];
    const double hi = std::max(xi, suffix);
    suffix = hi + std::log1p(std::exp(-std::abs(xi - suffix)));
    total += xi - suffix;
  }
  return total;
}

}  // namespace pad::detail
