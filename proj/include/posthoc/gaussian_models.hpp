#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "posthoc/index_set.hpp"
#include "posthoc/null_pool.hpp"
#include "posthoc/pvalues.hpp"
#include "posthoc/rng.hpp"

namespace posthoc {

enum class CovarianceKind { independent, equicorrelated, toeplitz };

// Unit-diagonal noise covariance: identity, Sigma_ij = rho (i != j), or
// Sigma_ij = (1 + |i - j|)^theta with theta < 0. The shift by one keeps the
// lag-1 correlation below 1; literal |i - j|^theta is not positive definite.
struct Covariance {
  CovarianceKind kind = CovarianceKind::independent;
  double param = 0.0;

  static Covariance independent() { return {}; }
  static Covariance equicorrelated(double rho);
  static Covariance toeplitz(double theta);

  // "indep", "equi:RHO" or "toeplitz:THETA".
  static Covariance parse(const std::string& text);
  std::string to_string() const;
};

enum class Sidedness { one, two };

Sidedness parse_sidedness(const std::string& text);
std::string to_string(Sidedness side);

// Standard normal upper tail P(Z >= x), via std::erfc.
double normal_upper_tail(double x);

// Draws q-vectors from the law of least-favorable null p-values: q_i is the
// one- or two-sided p-value of noise eps ~ N(0, Sigma).
class NullJointSampler {
 public:
  NullJointSampler(std::size_t m, Covariance cov, Sidedness side);

  std::size_t m() const noexcept { return m_; }
  const Covariance& covariance() const noexcept { return cov_; }
  Sidedness sidedness() const noexcept { return side_; }

  void draw_noise(Rng& rng, std::span<double> out) const;
  std::vector<double> draw(Rng& rng) const;

  // Draw j uses substream (seed, j).
  NullPool draw_pool(std::size_t B, std::uint64_t seed) const;

 private:
  std::size_t m_;
  Covariance cov_;
  Sidedness side_;
  Eigen::MatrixXd cholesky_;  // Toeplitz only
};

// Location model with n i.i.d. columns X_{.j} = mu + eps_j, eps_j ~ N(0, Sigma),
// mu_i = mubar / sqrt(n) on the false nulls 0..m1-1 and 0 elsewhere.
struct DataModel {
  std::size_t m = 0;
  std::size_t n = 1;
  Covariance cov;
  double pi0 = 1.0;
  double mubar = 0.0;
  std::uint64_t seed = 0;

  std::size_t m1() const;
  IndexSet h1() const;
  IndexSet h0() const;
  double mu(std::size_t i) const;
  void validate() const;
};

// m x n observation matrix, deterministic given the RNG state. The noise does
// not depend on mubar, so null rows are identical across signal strengths.
Eigen::MatrixXd sample_dataset(const DataModel& model, Rng& rng);
Eigen::MatrixXd sample_dataset(const DataModel& model);

// The two halves of sample_dataset: m x n noise columns, then mu added in place.
Eigen::MatrixXd sample_noise(const NullJointSampler& noise, std::size_t n, Rng& rng);
void add_signal(Eigen::MatrixXd& data, const DataModel& model);

// T_i = n^{-1/2} sum_j X_ij
std::vector<double> test_statistics(const Eigen::MatrixXd& data);

// two-sided: 2 P(Z >= |T_i|); one-sided: P(Z >= T_i)
PValueVector pvalues(std::span<const double> stats, Sidedness side);
double pvalue(double stat, Sidedness side);

using SignVector = std::vector<std::int8_t>;

// The group {-1, 1}^n acting on observation columns: (s.X)_ij = s_j X_ij.
struct SignFlipGroup {
  std::size_t n = 0;

  SignVector identity() const { return SignVector(n, 1); }
  SignVector draw(Rng& rng) const;
};

bool is_identity(const SignVector& s);

Eigen::MatrixXd sign_flip(const Eigen::MatrixXd& data, const SignVector& s);

// B transforms: the identity, then B - 1 i.i.d. uniform group elements.
std::vector<SignVector> draw_transforms(std::size_t n, std::size_t B, Rng& rng);
std::vector<SignVector> draw_transforms(std::size_t n, std::size_t B, std::uint64_t seed);

// "+-+..." encoding used in audit records.
std::string encode_signs(const SignVector& s);
SignVector decode_signs(const std::string& text);

// Pool of p(g_j . X) for the given transforms. Identity transforms reproduce
// pvalues(test_statistics(X)) bit for bit.
NullPool sign_flip_pool(const Eigen::MatrixXd& data, const std::vector<SignVector>& transforms,
                        Sidedness side = Sidedness::two);

// P(p_(k:m) <= x) for i.i.d. uniforms, i.e. the binomial tail P(Bin(m, x) >= k),
// summed in log space.
double orderstat_cdf_independent(std::size_t k, std::size_t m, double x);

}  // namespace posthoc
