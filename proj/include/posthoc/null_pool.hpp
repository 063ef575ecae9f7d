#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "posthoc/pvalues.hpp"

namespace posthoc {

// B null p-value vectors of length m: draws from the least-favorable law
// (known dependence) or p(g_j . X) for sign-flip transforms g_j (unknown
// dependence). Each draw is stored sorted, along with the hypothesis index of
// every sorted entry, so order statistics over any subset A are one scan.
class NullPool {
 public:
  // `column_major` holds B consecutive blocks of m p-values.
  NullPool(std::size_t m, std::size_t B, std::span<const double> column_major);

  // Pool from draws that are already sorted, with their hypothesis indices.
  static NullPool from_sorted(std::size_t m, std::size_t B, std::vector<double> sorted,
                              std::vector<std::uint32_t> order);

  std::size_t m() const noexcept { return m_; }
  std::size_t B() const noexcept { return B_; }

  // Ascending p-values of draw j.
  std::span<const double> sorted(std::size_t j) const noexcept {
    return {sorted_.data() + j * m_, m_};
  }
  // order(j)[r] is the hypothesis whose p-value is sorted(j)[r]; ties by index.
  std::span<const std::uint32_t> order(std::size_t j) const noexcept {
    return {order_.data() + j * m_, m_};
  }

  // Draw j in hypothesis order.
  PValueVector draw(std::size_t j) const;

 private:
  NullPool() = default;

  std::size_t m_ = 0;
  std::size_t B_ = 0;
  std::vector<double> sorted_;
  std::vector<std::uint32_t> order_;
};

}  // namespace posthoc
