#pragma once

// Reference implementations written from the definitions, deliberately naive,
// used to check the library's fast paths.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <set>
#include <vector>

#include "posthoc/bounds.hpp"
#include "posthoc/reference_family.hpp"
#include "posthoc/rng.hpp"

namespace oracle {

using posthoc::IndexSet;
using posthoc::ReferenceFamily;
using posthoc::RejectionSet;
using posthoc::Rng;

// min_k (|R \ R_k| + zeta_k) ∧ |R| with std::set arithmetic.
inline std::size_t vbar(const IndexSet& R, const ReferenceFamily& family) {
  std::size_t best = R.size();
  for (const auto& member : family.members()) {
    const std::set<std::size_t> Rk(member.set.begin(), member.set.end());
    std::size_t outside = 0;
    for (auto i : R) outside += Rk.count(i) == 0 ? 1 : 0;
    best = std::min(best, outside + member.zeta);
  }
  return best;
}

// Threshold family materialized by hand: R_k = {i : p_i < t_k}, zeta_k = k - 1.
inline std::size_t vbar_thresholds(const IndexSet& R, const std::vector<double>& t,
                                   const std::vector<double>& p) {
  std::size_t best = R.size();
  for (std::size_t k = 0; k < t.size(); ++k) {
    std::size_t outside = 0;
    for (auto i : R) outside += p[i] < t[k] ? 0 : 1;
    best = std::min(best, outside + k);
  }
  return best;
}

// ∃k : |R_k ∩ H0| > k - 1, by counting.
inline bool jer_violated(const std::vector<double>& t, const std::vector<double>& p,
                         const IndexSet& h0) {
  for (std::size_t k = 0; k < t.size(); ++k) {
    std::size_t hits = 0;
    for (auto i : h0) hits += p[i] < t[k] ? 1 : 0;
    if (hits > k) return true;
  }
  return false;
}

// sup{lambda : #{j : psi_j < lambda} <= alpha B}, capped at 1.
inline double lambda_by_count(std::vector<double> psi, double alpha) {
  std::sort(psi.begin(), psi.end());
  const long double budget = static_cast<long double>(alpha) * psi.size();
  double best = 0.0;
  for (double c : psi) {
    std::size_t below = 0;
    for (double v : psi) below += v < c ? 1 : 0;
    if (static_cast<long double>(below) <= budget + 1e-12L) best = std::max(best, c);
  }
  return std::min(best, 1.0);
}

inline long double normal_upper_tail(long double x) { return 0.5L * std::erfc(x / std::sqrt(2.0L)); }

// P(Bin(m, x) >= k) summed term by term in long double.
inline long double binomial_upper_tail(std::size_t k, std::size_t m, long double x) {
  if (k == 0) return 1.0L;
  if (x <= 0) return 0.0L;
  if (x >= 1) return 1.0L;
  long double total = 0.0L;
  for (std::size_t j = k; j <= m; ++j) {
    const long double log_term = std::lgamma(static_cast<long double>(m) + 1) -
                                 std::lgamma(static_cast<long double>(j) + 1) -
                                 std::lgamma(static_cast<long double>(m - j) + 1) +
                                 j * std::log(x) + (m - j) * std::log1p(-x);
    total += std::exp(log_term);
  }
  return total;
}

inline IndexSet random_subset(std::size_t m, double keep, Rng& rng) {
  std::bernoulli_distribution coin(keep);
  IndexSet out;
  for (std::size_t i = 0; i < m; ++i) {
    if (coin(rng)) out.push_back(i);
  }
  return out;
}

inline IndexSet mask_to_set(std::uint64_t mask, std::size_t m) {
  IndexSet out;
  for (std::size_t i = 0; i < m; ++i) {
    if (mask >> i & 1) out.push_back(i);
  }
  return out;
}

// Nested chain R_1 ⊆ ... ⊆ R_K grown from a random permutation, with random
// non-decreasing budgets zeta_k <= |R_k|.
inline ReferenceFamily random_nested_family(std::size_t m, Rng& rng) {
  std::vector<std::size_t> perm(m);
  for (std::size_t i = 0; i < m; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  const std::size_t K = std::uniform_int_distribution<std::size_t>(1, m)(rng);
  std::vector<std::size_t> sizes(K);
  for (auto& s : sizes) s = std::uniform_int_distribution<std::size_t>(0, m)(rng);
  std::sort(sizes.begin(), sizes.end());
  std::vector<RejectionSet> members;
  std::size_t zeta = 0;
  for (std::size_t k = 0; k < K; ++k) {
    IndexSet set(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(sizes[k]));
    std::sort(set.begin(), set.end());
    zeta = std::min(sizes[k], zeta + std::uniform_int_distribution<std::size_t>(0, 2)(rng));
    members.push_back({std::move(set), zeta});
  }
  return ReferenceFamily(m, std::move(members));
}

// Unrelated random sets with random budgets.
inline ReferenceFamily random_family(std::size_t m, Rng& rng) {
  const std::size_t K = std::uniform_int_distribution<std::size_t>(1, 6)(rng);
  std::vector<RejectionSet> members;
  for (std::size_t k = 0; k < K; ++k) {
    IndexSet set = random_subset(m, std::uniform_real_distribution<double>(0.1, 0.9)(rng), rng);
    const std::size_t zeta = std::uniform_int_distribution<std::size_t>(0, set.size())(rng);
    members.push_back({std::move(set), zeta});
  }
  return ReferenceFamily(m, std::move(members));
}

}  // namespace oracle
