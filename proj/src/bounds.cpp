#include "posthoc/bounds.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <limits>
#include <string>

#include "posthoc/errors.hpp"

namespace posthoc {

namespace {

Bound finish(std::size_t best_term, std::size_t best_k, std::size_t r_size) {
  Bound b;
  if (best_term < r_size) {
    b.vbar = best_term;
    b.k_argmin = best_k;
  } else {
    b.vbar = r_size;
  }
  b.sbar = r_size - b.vbar;
  return b;
}

}  // namespace

Bound bound(const IndexSet& R, const ReferenceFamily& family) {
  validate_index_set(R, family.m());
  std::size_t best = std::numeric_limits<std::size_t>::max();
  std::size_t best_k = 0;
  for (std::size_t k = 0; k < family.size(); ++k) {
    const auto& member = family[k];
    const std::size_t term = R.size() - intersection_size(R, member.set) + member.zeta;
    if (term < best) {
      best = term;
      best_k = k + 1;
    }
  }
  return finish(best, best_k, R.size());
}

Bound bound(const IndexSet& R, const ThresholdFamily& family, const PValueVector& p) {
  if (p.size() != family.m()) throw InputError("p-value count does not match the family's m");
  const auto sorted = p.sorted_subset(R);
  std::size_t below = 0;  // #{i in R : p_i < t_k}
  std::size_t best = std::numeric_limits<std::size_t>::max();
  std::size_t best_k = 0;
  for (std::size_t k = 1; k <= family.size(); ++k) {
    const double t = family.threshold(k);
    while (below < sorted.size() && sorted[below] < t) ++below;
    const std::size_t term = (sorted.size() - below) + (k - 1);
    if (term < best) {
      best = term;
      best_k = k;
    }
  }
  return finish(best, best_k, R.size());
}

std::size_t vbar(const IndexSet& R, const ReferenceFamily& family) { return bound(R, family).vbar; }

std::size_t vbar(const IndexSet& R, const ThresholdFamily& family, const PValueVector& p) {
  return bound(R, family, p).vbar;
}

std::size_t sbar(const IndexSet& R, const ReferenceFamily& family) { return bound(R, family).sbar; }

std::size_t sbar(const IndexSet& R, const ThresholdFamily& family, const PValueVector& p) {
  return bound(R, family, p).sbar;
}

std::size_t vstar_bruteforce(const IndexSet& R, const ReferenceFamily& family, std::size_t max_m) {
  if (family.m() > max_m || max_m > 62) {
    throw RefusedError("vstar enumeration has exponential cost (2^m); m = " +
                       std::to_string(family.m()) + " exceeds the cap of " +
                       std::to_string(std::min<std::size_t>(max_m, 62)));
  }
  validate_index_set(R, family.m());
  // Only A ⊆ R matters: |R ∩ A| depends on A ∩ R alone, and shrinking A keeps
  // every constraint satisfied.
  std::vector<std::uint64_t> masks;
  std::vector<std::size_t> budgets;
  for (const auto& member : family.members()) {
    std::uint64_t mask = 0;
    for (std::size_t pos = 0; pos < R.size(); ++pos) {
      if (std::binary_search(member.set.begin(), member.set.end(), R[pos])) {
        mask |= std::uint64_t{1} << pos;
      }
    }
    masks.push_back(mask);
    budgets.push_back(member.zeta);
  }
  const std::uint64_t limit = std::uint64_t{1} << R.size();
  int best = 0;
  for (std::uint64_t a = 0; a < limit; ++a) {
    const int size = std::popcount(a);
    if (size <= best) continue;
    bool feasible = true;
    for (std::size_t k = 0; k < masks.size() && feasible; ++k) {
      feasible = static_cast<std::size_t>(std::popcount(a & masks[k])) <= budgets[k];
    }
    if (feasible) best = size;
  }
  return static_cast<std::size_t>(best);
}

std::vector<std::size_t> zeta_tilde(const ReferenceFamily& family) {
  std::vector<std::size_t> out;
  out.reserve(family.size());
  for (const auto& member : family.members()) out.push_back(vbar(member.set, family));
  return out;
}

ThresholdFamily truncate_family(const ThresholdFamily& family, std::size_t K0) {
  const auto keep = std::min(family.size(), K0 + 1);
  const auto t = family.thresholds();
  return ThresholdFamily(family.m(), std::vector<double>(t.begin(), t.begin() + keep));
}

ThresholdFamily simes_family(const PValueVector& p, double alpha, bool hommel) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0,1)");
  const std::size_t m = p.size();
  double c_m = 1.0;
  if (hommel) {
    c_m = 0.0;
    for (std::size_t i = 1; i <= m; ++i) c_m += 1.0 / static_cast<double>(i);
  }
  std::vector<double> t(m);
  for (std::size_t k = 1; k <= m; ++k) {
    t[k - 1] = alpha * static_cast<double>(k) / (static_cast<double>(m) * c_m);
  }
  return ThresholdFamily(m, std::move(t));
}

IndexSet top_k_set(const PValueVector& p, std::size_t k) {
  if (k > p.size()) throw InputError("top-k exceeds the number of hypotheses");
  auto order = p.ascending_order();
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

std::vector<Bound> top_k_curve(const ThresholdFamily& family, const PValueVector& p,
                               std::size_t N) {
  if (p.size() != family.m()) throw InputError("p-value count does not match the family's m");
  if (N > p.size()) throw InputError("top-k exceeds the number of hypotheses");
  const std::size_t K = family.size();
  auto sorted = std::vector<double>(p.values().begin(), p.values().end());
  std::sort(sorted.begin(), sorted.end());

  // c_k = #{i : p_i < t_k}, non-decreasing in k. For R = top k', the k-th term
  // is max(0, k' - c_k) + k - 1.
  std::vector<std::size_t> c(K);
  std::size_t below = 0;
  for (std::size_t k = 1; k <= K; ++k) {
    while (below < sorted.size() && sorted[below] < family.threshold(k)) ++below;
    c[k - 1] = below;
  }

  std::vector<Bound> out;
  out.reserve(N);
  std::size_t j = 0;  // #{k : c_k < k'}
  // Running minimum of (k - c_k) over k <= j, as a signed value.
  long long prefix_min = std::numeric_limits<long long>::max();
  std::size_t prefix_k = 0;
  for (std::size_t kp = 1; kp <= N; ++kp) {
    while (j < K && c[j] < kp) {
      const long long v = static_cast<long long>(j + 1) - static_cast<long long>(c[j]);
      if (v < prefix_min) {
        prefix_min = v;
        prefix_k = j + 1;
      }
      ++j;
    }
    std::size_t best = std::numeric_limits<std::size_t>::max();
    std::size_t best_k = 0;
    if (j > 0) {
      best = static_cast<std::size_t>(static_cast<long long>(kp) - 1 + prefix_min);
      best_k = prefix_k;
    }
    if (j < K && j < best) {
      best = j;
      best_k = j + 1;
    }
    out.push_back(finish(best, best_k, kp));
  }
  return out;
}

}  // namespace posthoc
