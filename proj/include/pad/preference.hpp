#pragma once

// Bradley-Terry pairs, Plackett-Luce ranking probabilities, explicit
// distributions over all n! rankings, and preference decomposition.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "pad/reward.hpp"

namespace pad {

// order[0] is the most preferred response index.
struct Ranking {
  std::vector<std::size_t> order;

  std::size_t size() const noexcept { return order.size(); }
  void validate() const;
  static Ranking identity(std::size_t n);
  friend bool operator==(const Ranking&, const Ranking&) = default;
};

// Masses for all n! rankings, stored in lexicographic permutation order.
struct RankingDistribution {
  std::size_t n = 0;
  std::vector<double> masses;

  std::size_t size() const noexcept { return masses.size(); }
};

struct DecompositionPlan {
  std::size_t k = 1;
  std::size_t m = 2;

  void validate() const;
  std::size_t total() const noexcept { return k * m; }
};

// Counts ranking probabilities evaluated by enumeration routines.
struct TermCounter {
  std::uint64_t ranking_terms = 0;
};

inline constexpr std::size_t kDefaultEnumerationCap = 8;

std::uint64_t factorial(std::size_t n);

// Permutation with lexicographic rank `index` among permutations of 0..n-1.
std::vector<std::size_t> unrank_permutation(std::size_t n, std::uint64_t index);
std::uint64_t rank_permutation(std::span<const std::size_t> perm);

double bt_pair_prob(double r1, double r2, double beta);

// log of prod_i exp(beta r_(i)) / sum_{j>=i} exp(beta r_(j)).
double pl_log_prob(std::span<const double> rewards, double beta, std::span<const std::size_t> order);
double pl_ranking_prob(const RewardVector& rewards, double beta, const Ranking& ranking);

// Plackett-Luce mass for every ranking. Throws CapacityError if n > cap.
RankingDistribution full_distribution(std::span<const double> rewards, double beta,
                                      std::size_t cap = kDefaultEnumerationCap,
                                      TermCounter* counter = nullptr);
inline RankingDistribution full_distribution(const RewardVector& rewards, double beta,
                                             std::size_t cap = kDefaultEnumerationCap,
                                             TermCounter* counter = nullptr) {
  return full_distribution(rewards.values, beta, cap, counter);
}

// Index of the most probable ranking (first one on exact ties).
std::size_t modal_index(const RankingDistribution& dist);

// Descending by reward; ties keep the lower response index first.
Ranking argsort_rewards(std::span<const double> rewards);
inline Ranking argsort_rewards(const RewardVector& rewards) { return argsort_rewards(rewards.values); }

struct SubPreference {
  RewardVector rewards;
  Ranking ranking;
};

// sum_i log pl_ranking_prob(sub-batch i).
double decompose_log_prob(std::span<const SubPreference> sub_batches, double beta,
                          TermCounter* counter = nullptr);

// Splits rewards into plan.k consecutive blocks of plan.m entries.
std::vector<RewardVector> partition_rewards(const RewardVector& rewards, const DecompositionPlan& plan);

// Restricts a full ranking to each block of consecutive indices; block-local indices.
std::vector<Ranking> decompose_ranking(const Ranking& full, const DecompositionPlan& plan);

// Kendall tau-a between two rankings of the same items.
double kendall_tau(const Ranking& a, const Ranking& b);

// `n=<n>` header, then n! lines `<comma-separated perm> <mass>` in lexicographic order.
void write_distribution(std::ostream& out, const RankingDistribution& dist);
RankingDistribution read_distribution(std::istream& in);

namespace serial {

// Single-threaded reference for full_distribution.
RankingDistribution full_distribution(std::span<const double> rewards, double beta,
                                      std::size_t cap = kDefaultEnumerationCap,
                                      TermCounter* counter = nullptr);

}  // namespace serial

}  // namespace pad
