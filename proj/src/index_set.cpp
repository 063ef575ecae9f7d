#include "posthoc/index_set.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "posthoc/errors.hpp"

namespace posthoc {

void validate_index_set(const IndexSet& set, std::size_t m) {
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set[i] >= m) {
      throw InputError("index " + std::to_string(set[i] + 1) + " out of range 1.." +
                       std::to_string(m));
    }
    if (i > 0 && set[i] <= set[i - 1]) {
      throw InputError("index set must be strictly increasing without duplicates");
    }
  }
}

IndexSet index_set_from_one_based(std::span<const std::int64_t> indices, std::size_t m) {
  IndexSet out;
  out.reserve(indices.size());
  for (const auto idx : indices) {
    if (idx < 1 || static_cast<std::uint64_t>(idx) > m) {
      throw InputError("index " + std::to_string(idx) + " out of range 1.." + std::to_string(m));
    }
    out.push_back(static_cast<std::size_t>(idx - 1));
  }
  std::sort(out.begin(), out.end());
  if (std::adjacent_find(out.begin(), out.end()) != out.end()) {
    throw InputError("duplicate index in set");
  }
  return out;
}

std::vector<std::int64_t> to_one_based(const IndexSet& set) {
  std::vector<std::int64_t> out(set.size());
  std::transform(set.begin(), set.end(), out.begin(),
                 [](std::size_t i) { return static_cast<std::int64_t>(i) + 1; });
  return out;
}

IndexSet full_index_set(std::size_t m) {
  IndexSet out(m);
  std::iota(out.begin(), out.end(), std::size_t{0});
  return out;
}

IndexSet complement(const IndexSet& set, std::size_t m) {
  IndexSet out;
  out.reserve(m - std::min(m, set.size()));
  std::size_t j = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (j < set.size() && set[j] == i) {
      ++j;
    } else {
      out.push_back(i);
    }
  }
  return out;
}

std::size_t intersection_size(const IndexSet& a, const IndexSet& b) {
  std::size_t count = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++count;
      ++ia;
      ++ib;
    }
  }
  return count;
}

bool is_subset(const IndexSet& a, const IndexSet& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

std::vector<char> index_mask(const IndexSet& set, std::size_t m) {
  std::vector<char> mask(m, 0);
  for (const auto i : set) mask[i] = 1;
  return mask;
}

}  // namespace posthoc
