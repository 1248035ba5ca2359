#include "pad/preference.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "pad/errors.hpp"
#include "permutation_blocks.hpp"
#include "text_io.hpp"

namespace pad {

void Ranking::validate() const {
  std::vector<bool> seen(order.size(), false);
  for (std::size_t idx : order) {
    if (idx >= order.size() || seen[idx]) throw InvalidInput("ranking is not a permutation");
    seen[idx] = true;
  }
}

Ranking Ranking::identity(std::size_t n) {
  Ranking r;
  r.order.resize(n);
  std::iota(r.order.begin(), r.order.end(), std::size_t{0});
  return r;
}

void DecompositionPlan::validate() const {
  if (k < 1) throw InvalidInput("decomposition needs k >= 1");
  if (m < 2) throw InvalidInput("decomposition needs m >= 2");
}

std::uint64_t factorial(std::size_t n) {
  if (n > 20) throw CapacityError("factorial overflows 64 bits for n > 20");
  std::uint64_t f = 1;
  for (std::size_t i = 2; i <= n; ++i) f *= i;
  return f;
}

std::vector<std::size_t> unrank_permutation(std::size_t n, std::uint64_t index) {
  if (index >= factorial(n)) throw InvalidInput("permutation index out of range");
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  std::vector<std::size_t> perm;
  perm.reserve(n);
  for (std::size_t i = n; i > 0; --i) {
    const std::uint64_t f = factorial(i - 1);
    const auto digit = static_cast<std::size_t>(index / f);
    index %= f;
    perm.push_back(pool[digit]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(digit));
  }
  return perm;
}

std::uint64_t rank_permutation(std::span<const std::size_t> perm) {
  const std::size_t n = perm.size();
  std::uint64_t rank = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t smaller_after = 0;
    for (std::size_t j = i + 1; j < n; ++j)
      if (perm[j] < perm[i]) ++smaller_after;
    rank += smaller_after * factorial(n - 1 - i);
  }
  return rank;
}

namespace {

void check_beta(double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw InvalidInput("beta must be positive and finite");
}

void check_finite(std::span<const double> rewards) {
  for (double r : rewards)
    if (!std::isfinite(r)) throw InvalidInput("rewards must be finite");
}

std::vector<double> scaled(std::span<const double> rewards, double beta) {
  std::vector<double> x(rewards.begin(), rewards.end());
  for (double& v : x) v *= beta;
  return x;
}

void check_enumerable(std::size_t n, std::size_t cap) {
  if (n == 0) throw InvalidInput("cannot enumerate rankings of zero responses");
  if (n > cap)
    throw CapacityError("enumerating " + std::to_string(n) + "! rankings exceeds the cap of n <= " +
                        std::to_string(cap) + "; decompose into smaller sub-batches");
}

}  // namespace

double bt_pair_prob(double r1, double r2, double beta) {
  check_beta(beta);
  const double d = beta * (r1 - r2);
  if (d >= 0.0) return 1.0 / (1.0 + std::exp(-d));
  const double e = std::exp(d);
  return e / (1.0 + e);
}

double pl_log_prob(std::span<const double> rewards, double beta, std::span<const std::size_t> order) {
  check_beta(beta);
  check_finite(rewards);
  if (order.size() != rewards.size()) throw InvalidInput("ranking size does not match rewards");
  Ranking{std::vector<std::size_t>(order.begin(), order.end())}.validate();
  const auto x = scaled(rewards, beta);
  return detail::pl_log_prob_scaled(x.data(), order.data(), order.size());
}

double pl_ranking_prob(const RewardVector& rewards, double beta, const Ranking& ranking) {
  return std::exp(pl_log_prob(rewards.values, beta, ranking.order));
}

RankingDistribution full_distribution(std::span<const double> rewards, double beta,
                                      std::size_t cap, TermCounter* counter) {
  check_beta(beta);
  check_finite(rewards);
  const std::size_t n = rewards.size();
  check_enumerable(n, cap);
  const auto x = scaled(rewards, beta);
  const std::uint64_t total = factorial(n);
  RankingDistribution dist{n, std::vector<double>(total)};
  const auto blocks = static_cast<std::int64_t>(detail::block_count(total));
  double* masses = dist.masses.data();
#pragma omp parallel for schedule(static) if (blocks > 1)
  for (std::int64_t b = 0; b < blocks; ++b) {
    detail::visit_block(n, static_cast<std::uint64_t>(b), total,
                        [&](std::uint64_t idx, const std::vector<std::size_t>& perm) {
                          masses[idx] = std::exp(detail::pl_log_prob_scaled(x.data(), perm.data(), n));
                        });
  }
  if (counter) counter->ranking_terms += total;
  return dist;
}

namespace serial {

RankingDistribution full_distribution(std::span<const double> rewards, double beta,
                                      std::size_t cap, TermCounter* counter) {
  check_beta(beta);
  check_finite(rewards);
  const std::size_t n = rewards.size();
  check_enumerable(n, cap);
  RankingDistribution dist;
  dist.n = n;
  dist.masses.reserve(factorial(n));
  auto perm = Ranking::identity(n).order;
  do {
    dist.masses.push_back(std::exp(pl_log_prob(rewards, beta, perm)));
  } while (std::next_permutation(perm.begin(), perm.end()));
  if (counter) counter->ranking_terms += dist.masses.size();
  return dist;
}

}  // namespace serial

std::size_t modal_index(const RankingDistribution& dist) {
  if (dist.masses.empty()) throw InvalidInput("empty distribution");
  return static_cast<std::size_t>(std::max_element(dist.masses.begin(), dist.masses.end()) -
                                  dist.masses.begin());
}

Ranking argsort_rewards(std::span<const double> rewards) {
  Ranking r = Ranking::identity(rewards.size());
  std::stable_sort(r.order.begin(), r.order.end(),
                   [&](std::size_t a, std::size_t b) { return rewards[a] > rewards[b]; });
  return r;
}

double decompose_log_prob(std::span<const SubPreference> sub_batches, double beta,
                          TermCounter* counter) {
  double total = 0.0;
  for (const auto& sb : sub_batches) {
    total += pl_log_prob(sb.rewards.values, beta, sb.ranking.order);
    if (counter) ++counter->ranking_terms;
  }
  return total;
}

std::vector<RewardVector> partition_rewards(const RewardVector& rewards, const DecompositionPlan& plan) {
  plan.validate();
  if (rewards.size() != plan.total())
    throw InvalidInput("reward vector of size " + std::to_string(rewards.size()) +
                       " does not split into " + std::to_string(plan.k) + " x " +
                       std::to_string(plan.m));
  std::vector<RewardVector> out(plan.k);
  for (std::size_t i = 0; i < plan.k; ++i) {
    out[i].kind = rewards.kind;
    const auto first = rewards.values.begin() + static_cast<std::ptrdiff_t>(i * plan.m);
    out[i].values.assign(first, first + static_cast<std::ptrdiff_t>(plan.m));
  }
  return out;
}

std::vector<Ranking> decompose_ranking(const Ranking& full, const DecompositionPlan& plan) {
  plan.validate();
  full.validate();
  if (full.size() != plan.total()) throw InvalidInput("ranking size does not match plan");
  std::vector<Ranking> out(plan.k);
  for (std::size_t idx : full.order) out[idx / plan.m].order.push_back(idx % plan.m);
  return out;
}

double kendall_tau(const Ranking& a, const Ranking& b) {
  a.validate();
  b.validate();
  const std::size_t n = a.size();
  if (b.size() != n) throw InvalidInput("kendall_tau: ranking sizes differ");
  if (n < 2) return 1.0;
  std::vector<std::size_t> pa(n), pb(n);
  for (std::size_t i = 0; i < n; ++i) {
    pa[a.order[i]] = i;
    pb[b.order[i]] = i;
  }
  long long score = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool sa = pa[i] < pa[j];
      const bool sb = pb[i] < pb[j];
      score += sa == sb ? 1 : -1;
    }
  return static_cast<double>(score) / static_cast<double>(n * (n - 1) / 2);
}

void write_distribution(std::ostream& out, const RankingDistribution& dist) {
  if (dist.masses.size() != factorial(dist.n)) throw InvalidInput("distribution size is not n!");
  out << "n=" << dist.n << '\n';
  auto perm = Ranking::identity(dist.n).order;
  std::size_t idx = 0;
  do {
    for (std::size_t i = 0; i < perm.size(); ++i) {
      if (i) out << ',';
      out << perm[i];
    }
    out << ' ' << detail::format_double(dist.masses[idx++]) << '\n';
  } while (std::next_permutation(perm.begin(), perm.end()));
}

RankingDistribution read_distribution(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("n=", 0) != 0)
    throw ConfigError("distribution file: expected 'n=<n>' header");
  RankingDistribution dist;
  dist.n = detail::parse_uint(detail::trim(std::string_view(line).substr(2)), "n");
  const std::uint64_t total = factorial(dist.n);
  dist.masses.reserve(total);
  auto expected = Ranking::identity(dist.n).order;
  for (std::uint64_t idx = 0; idx < total; ++idx) {
    if (!std::getline(in, line)) throw ConfigError("distribution file: truncated");
    std::istringstream ls(line);
    std::string perm_text, mass_text;
    if (!(ls >> perm_text >> mass_text)) throw ConfigError("distribution file: malformed line");
    std::vector<std::size_t> perm;
    std::istringstream ps(perm_text);
    std::string item;
    while (std::getline(ps, item, ','))
      perm.push_back(static_cast<std::size_t>(detail::parse_uint(item, "permutation entry")));
    if (perm != expected) throw ConfigError("distribution file: rankings not in lexicographic order");
    dist.masses.push_back(detail::parse_double(mass_text, "mass"));
    std::next_permutation(expected.begin(), expected.end());
  }
  return dist;
}

}  // namespace pad
