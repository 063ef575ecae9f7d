#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "posthoc/index_set.hpp"

namespace posthoc {

// m >= 1 p-values in [0,1], index-aligned with the hypotheses.
class PValueVector {
 public:
  explicit PValueVector(std::vector<double> values);

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }

  // Ascending values of {p_i : i in set}.
  std::vector<double> sorted_subset(const IndexSet& set) const;

  // Indices ordered by (p_i, i).
  std::vector<std::size_t> ascending_order() const;

 private:
  std::vector<double> values_;
};

}  // namespace posthoc
