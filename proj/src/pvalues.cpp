#include "posthoc/pvalues.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "posthoc/errors.hpp"

namespace posthoc {

PValueVector::PValueVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw InputError("p-value vector must contain at least one value");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const double v = values_[i];
    if (!(v >= 0.0 && v <= 1.0)) {
      throw InputError("p-value " + std::to_string(i + 1) + " is outside [0,1]");
    }
  }
}

std::vector<double> PValueVector::sorted_subset(const IndexSet& set) const {
  validate_index_set(set, size());
  std::vector<double> out;
  out.reserve(set.size());
  for (const auto i : set) out.push_back(values_[i]);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::size_t> PValueVector::ascending_order() const {
  std::vector<std::size_t> order(values_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [this](std::size_t a, std::size_t b) { return values_[a] < values_[b]; });
  return order;
}

}  // namespace posthoc
