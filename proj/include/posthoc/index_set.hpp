#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace posthoc {

// Sorted, duplicate-free list of 0-based hypothesis indices. All file and
// network formats use 1-based indices; conversion happens at the boundary.
using IndexSet = std::vector<std::size_t>;

// Throws InputError unless `set` is strictly increasing with entries < m.
void validate_index_set(const IndexSet& set, std::size_t m);

// Sorts, rejects duplicates and indices outside 1..m, and shifts to 0-based.
IndexSet index_set_from_one_based(std::span<const std::int64_t> indices, std::size_t m);

std::vector<std::int64_t> to_one_based(const IndexSet& set);

// {0, ..., m-1}
IndexSet full_index_set(std::size_t m);

// Sorted complement within {0, ..., m-1}.
IndexSet complement(const IndexSet& set, std::size_t m);

// |a ∩ b| for two sorted sets.
std::size_t intersection_size(const IndexSet& a, const IndexSet& b);

bool is_subset(const IndexSet& a, const IndexSet& b);

// Membership mask of length m.
std::vector<char> index_mask(const IndexSet& set, std::size_t m);

}  // namespace posthoc
