#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "posthoc/bounds.hpp"
#include "posthoc/gaussian_models.hpp"
#include "posthoc/index_set.hpp"
#include "posthoc/pvalues.hpp"
#include "posthoc/reference_family.hpp"
#include "posthoc/rng.hpp"

namespace posthoc {

// One CSV row of an experiment: a setting and a procedure.
struct ResultRow {
  std::string setting_id;
  std::size_t m = 0;
  std::size_t n = 0;
  double rho_theta = 0.0;
  double pi0 = 1.0;
  double mubar = 0.0;
  double alpha = 0.0;
  std::string tmpl;
  std::size_t K = 0;
  std::string mode;
  std::string scenario;
  double estimate = 0.0;
  double stderr_ = 0.0;
  std::size_t runs_used = 0;
  std::uint64_t seed = 0;
};

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows);

// sqrt(p (1 - p) / runs)
double bernoulli_stderr(double phat, std::size_t runs);

// True iff p_(k:H0) < t_k for some k <= K ∧ m0; `sorted_h0` ascending.
bool jer_violated(std::span<const double> thresholds, std::span<const double> sorted_h0);
bool jer_violated(const ThresholdFamily& family, const PValueVector& p, const IndexSet& h0);
// |R_k ∩ H0| > zeta_k for some k.
bool jer_violated(const ReferenceFamily& family, const IndexSet& h0);

struct Table1Config {
  std::size_t m = 1000;
  double alpha = 0.2;
  std::vector<double> rhos{0.0, 0.1, 0.2, 0.4, 0.8};
  std::size_t runs = 10'000;
  std::uint64_t seed = 1;
  unsigned threads = 0;
};

// Full null, one-sided equi-correlated p-values, Simes family at level alpha.
// estimate = empirical JER / alpha.
std::vector<ResultRow> run_table1(const Table1Config& cfg);

struct Table2Row {
  std::size_t k = 0;
  std::size_t m = 0;
  double alpha = 0.0;
  double x = 0.0;  // alpha k / m
  double value = 0.0;
};

// P(p_(k:m) < alpha k / m) for i.i.d. uniforms, exact.
std::vector<Table2Row> run_table2(std::size_t m = 1000, double alpha = 0.05,
                                  const std::vector<std::size_t>& ks = {1, 2, 5, 10, 100});
void write_table2_csv(std::ostream& out, const std::vector<Table2Row>& rows);

// Empirical JER of the Simes family on i.i.d. uniform p-values.
ResultRow run_simes_iid(std::size_t m, double alpha, std::size_t runs, std::uint64_t seed,
                        unsigned threads);

struct JerGridConfig {
  std::size_t m = 200;
  std::size_t n = 100;
  std::size_t B = 500;
  std::size_t runs = 1000;
  std::vector<Covariance> covs{Covariance::equicorrelated(0.0), Covariance::equicorrelated(0.2),
                               Covariance::equicorrelated(0.4)};
  std::vector<double> pi0s{0.8, 0.9, 0.99};
  std::vector<double> mubars{0, 1, 2, 3, 4, 5};
  double alpha = 0.25;
  bool linear = true;
  std::vector<std::size_t> balanced_K;  // 0 stands for m; empty skips balanced
  // Monte Carlo calibration from the known law (one pool per covariance)
  // instead of sign-flipping each dataset.
  bool known = false;
  std::uint64_t seed = 1;
  unsigned threads = 0;
};

struct JerGridResult {
  std::vector<ResultRow> rows;
  // indicators[r][run] is the violation indicator behind rows[r].
  std::vector<std::vector<std::uint8_t>> indicators;
  // Runs where a step-down lambda sequence decreased, or ended below the
  // single-step lambda. Always 0 when the pool is shared.
  std::size_t monotonicity_violations = 0;
};

// Empirical JER per (covariance, pi0, mubar, template, K, mode). Noise and
// transforms depend only on (covariance, run), so cells are paired.
JerGridResult run_jer_grid(const JerGridConfig& cfg);

// S̄(R) / |R ∩ H1|, or nothing when R ∩ H1 = ∅.
std::optional<double> averaged_power(const ThresholdFamily& family, const PValueVector& p,
                                     const IndexSet& R, const IndexSet& h1);

// Largest k with p_(k) <= level k / m; the k smallest p-values.
IndexSet benjamini_hochberg(const PValueVector& p, double level);

// (a) everything; (b) half of {p <= alpha0}; (c) half of the BH(alpha0)
// rejections. Halves are drawn without replacement, the item of rank r
// (ascending p) with weight |R0| + 1 - r.
IndexSet select_scenario(char kind, const PValueVector& p, double alpha0, Rng& rng);

// 20 log-spaced points in [0.005, 0.5].
std::vector<double> default_power_alphas();

// sqrt(-4 log(1 - pi0))
double power_mubar(double pi0);

struct PowerGridConfig {
  std::size_t m = 200;
  std::size_t n = 100;
  std::size_t B = 500;
  std::size_t runs = 1000;
  std::vector<double> pi0s{0.8, 0.9, 0.99};
  std::vector<double> alphas = default_power_alphas();
  // "m", "2m1" or a number.
  std::vector<std::string> balanced_K{"10", "2m1", "m"};
  std::string scenarios = "abc";
  // Known-dependence calibration under independence (one shared pool);
  // false sign-flips each dataset instead.
  bool known = true;
  std::uint64_t seed = 1;
  unsigned threads = 0;
};

std::size_t resolve_K(const std::string& text, std::size_t m, std::size_t m1);

// Averaged power of step-down linear (K = m) and balanced reference families.
std::vector<ResultRow> run_power_grid(const PowerGridConfig& cfg);

}  // namespace posthoc
