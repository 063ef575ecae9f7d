#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <json.hpp>

#include "posthoc/index_set.hpp"
#include "posthoc/pvalues.hpp"

namespace posthoc {

// One reference set together with its false-positive budget.
struct RejectionSet {
  IndexSet set;
  std::size_t zeta = 0;
};

// K rejection sets (R_k, zeta_k) over hypotheses 0..m-1. JER control of the
// family is what the post hoc bounds interpolate from.
class ReferenceFamily {
 public:
  ReferenceFamily(std::size_t m, std::vector<RejectionSet> members);

  std::size_t m() const noexcept { return m_; }
  std::size_t size() const noexcept { return members_.size(); }
  const std::vector<RejectionSet>& members() const noexcept { return members_; }
  const RejectionSet& operator[](std::size_t k) const noexcept { return members_[k]; }

  // True iff R_k ⊆ R_{k+1} for every k.
  bool nested() const noexcept { return nested_; }

  std::vector<std::size_t> zetas() const;
  ReferenceFamily with_zetas(std::span<const std::size_t> zetas) const;

 private:
  std::size_t m_;
  std::vector<RejectionSet> members_;
  bool nested_ = true;
};

// Thresholds t_1 <= ... <= t_K with implicit budgets zeta_k = k - 1.
class ThresholdFamily {
 public:
  ThresholdFamily(std::size_t m, std::vector<double> thresholds);

  std::size_t m() const noexcept { return m_; }
  std::size_t size() const noexcept { return thresholds_.size(); }
  std::span<const double> thresholds() const noexcept { return thresholds_; }
  // 1-based k.
  double threshold(std::size_t k) const noexcept { return thresholds_[k - 1]; }

  // R_k = {i : p_i < t_k}, zeta_k = k - 1. Always nested.
  ReferenceFamily materialize(const PValueVector& p) const;

 private:
  std::size_t m_;
  std::vector<double> thresholds_;
};

// {m, members: [{set: [1-based...], zeta}]}
nlohmann::json to_json(const ReferenceFamily& family);
ReferenceFamily reference_family_from_json(const nlohmann::json& j);

}  // namespace posthoc
