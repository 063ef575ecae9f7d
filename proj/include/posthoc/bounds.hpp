#pragma once

#include <cstddef>
#include <vector>

#include "posthoc/index_set.hpp"
#include "posthoc/pvalues.hpp"
#include "posthoc/reference_family.hpp"

namespace posthoc {

// Post hoc bound on a candidate set R.
struct Bound {
  std::size_t vbar = 0;  // upper bound on false positives in R
  std::size_t sbar = 0;  // |R| - vbar, lower bound on true positives in R
  // 1-based k attaining min_k(|R \ R_k| + zeta_k); 0 when the |R| cap is
  // no larger than every family term (always the case for R = ∅).
  std::size_t k_argmin = 0;
};

// vbar(R) = min_k (|R \ R_k| + zeta_k) ∧ |R|
Bound bound(const IndexSet& R, const ReferenceFamily& family);

// Same bound for R_k = {p_i < t_k}, via a merge scan over the sorted p-values
// of R: O(|R| log |R| + K).
Bound bound(const IndexSet& R, const ThresholdFamily& family, const PValueVector& p);

std::size_t vbar(const IndexSet& R, const ReferenceFamily& family);
std::size_t vbar(const IndexSet& R, const ThresholdFamily& family, const PValueVector& p);
std::size_t sbar(const IndexSet& R, const ReferenceFamily& family);
std::size_t sbar(const IndexSet& R, const ThresholdFamily& family, const PValueVector& p);

inline constexpr std::size_t kDefaultVstarCap = 20;

// max { |R ∩ A| : |R_k ∩ A| <= zeta_k for all k } by enumerating A ⊆ R.
// Throws RefusedError when m exceeds `max_m`.
std::size_t vstar_bruteforce(const IndexSet& R, const ReferenceFamily& family,
                             std::size_t max_m = kDefaultVstarCap);

// zeta~_k = vbar(R_k). Replacing zeta by zeta~ leaves vbar unchanged.
std::vector<std::size_t> zeta_tilde(const ReferenceFamily& family);

// First K0 + 1 members; exact for every R with vbar(R) <= K0.
ThresholdFamily truncate_family(const ThresholdFamily& family, std::size_t K0);

// t_k = alpha k / (m c_m), K = m, with c_m = 1 (Simes) or sum_{i<=m} 1/i (Hommel).
ThresholdFamily simes_family(const PValueVector& p, double alpha, bool hommel = false);

// Bounds for the sets of the k' smallest p-values (ties broken by index),
// k' = 1..N. O(m log m + N + K).
std::vector<Bound> top_k_curve(const ThresholdFamily& family, const PValueVector& p,
                               std::size_t N);

// The k smallest p-values, ties broken by index.
IndexSet top_k_set(const PValueVector& p, std::size_t k);

}  // namespace posthoc
