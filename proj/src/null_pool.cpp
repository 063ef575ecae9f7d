#include "posthoc/null_pool.hpp"

#include <algorithm>
#include <numeric>

#include "posthoc/errors.hpp"

namespace posthoc {

NullPool::NullPool(std::size_t m, std::size_t B, std::span<const double> column_major)
    : m_(m), B_(B), sorted_(m * B), order_(m * B) {
  if (m == 0 || B == 0) throw InputError("null pool needs m >= 1 and B >= 1");
  if (m > UINT32_MAX) throw InputError("null pool supports at most 2^32 - 1 hypotheses");
  if (column_major.size() != m * B) throw InputError("null pool size mismatch");
  std::vector<std::uint32_t> idx(m);
  for (std::size_t j = 0; j < B; ++j) {
    const double* col = column_major.data() + j * m;
    std::iota(idx.begin(), idx.end(), 0u);
    std::sort(idx.begin(), idx.end(), [col](std::uint32_t a, std::uint32_t b) {
      return col[a] < col[b] || (col[a] == col[b] && a < b);
    });
    for (std::size_t r = 0; r < m; ++r) {
      order_[j * m + r] = idx[r];
      sorted_[j * m + r] = col[idx[r]];
    }
  }
}

NullPool NullPool::from_sorted(std::size_t m, std::size_t B, std::vector<double> sorted,
                               std::vector<std::uint32_t> order) {
  if (m == 0 || B == 0) throw InputError("null pool needs m >= 1 and B >= 1");
  if (sorted.size() != m * B || order.size() != m * B) throw InputError("null pool size mismatch");
  NullPool pool;
  pool.m_ = m;
  pool.B_ = B;
  pool.sorted_ = std::move(sorted);
  pool.order_ = std::move(order);
  return pool;
}

PValueVector NullPool::draw(std::size_t j) const {
  std::vector<double> values(m_);
  const auto s = sorted(j);
  const auto o = order(j);
  for (std::size_t r = 0; r < m_; ++r) values[o[r]] = s[r];
  return PValueVector(std::move(values));
}

}  // namespace posthoc
