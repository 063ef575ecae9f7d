#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "posthoc/gaussian_models.hpp"
#include "posthoc/index_set.hpp"
#include "posthoc/null_pool.hpp"
#include "posthoc/pvalues.hpp"
#include "posthoc/reference_family.hpp"

namespace posthoc {

enum class TemplateKind { linear, balanced };

TemplateKind parse_template_kind(const std::string& text);
std::string to_string(TemplateKind kind);

// Where a template's threshold curves came from. Known-dependence calibration
// only accepts templates that do not depend on the observed data.
enum class TemplateOrigin {
  formula,          // linear
  null_sampler,     // balanced, Monte Carlo from the least-favorable law
  exact_independent,// balanced, exact order-statistic CDFs under independence
  observed_data,    // balanced, from transforms of the observed data (experimental)
};

// One-parameter threshold template t_k(lambda), k = 1..K, with t_k(0) = 0 and
// each t_k non-decreasing and left-continuous.
//
//   linear:   t_k(lambda) = lambda k / m,        t_k^{-1}(u) = 1 ∧ (m u / k)
//   balanced: t_k(lambda) = F_k^{-1}(lambda),    t_k^{-1}(u) = F_k(u)
//
// where F_k is the CDF of the k-th smallest null p-value, stored as a sorted
// sample (empirical CDF) or evaluated exactly under independence.
class Template {
 public:
  static Template linear(std::size_t m, std::size_t K);
  // curves[k-1] is a sample of the k-th order statistic; sorted on entry.
  static Template balanced(std::size_t m, std::vector<std::vector<double>> curves,
                           TemplateOrigin origin);
  static Template balanced_independent(std::size_t m, std::size_t K);

  TemplateKind kind() const noexcept { return kind_; }
  TemplateOrigin origin() const noexcept { return origin_; }
  std::size_t m() const noexcept { return m_; }
  std::size_t K() const noexcept { return K_; }
  const std::vector<std::vector<double>>& curves() const noexcept { return curves_; }

  // 1-based k, lambda in [0,1].
  double threshold(std::size_t k, double lambda) const;
  // Generalized inverse max{x in [0,1] : t_k(x) <= u}; u may be ±inf.
  double inverse(std::size_t k, double u) const;

  std::vector<double> thresholds(double lambda) const;
  ThresholdFamily family(double lambda) const { return ThresholdFamily(m_, thresholds(lambda)); }

  // Psi on values already restricted to A and sorted ascending:
  // min_{k <= K ∧ |A|} t_k^{-1}(p_(k:A)); +inf when empty.
  double psi_sorted(std::span<const double> sorted) const;

  // Same template with the first K' curves.
  Template truncated(std::size_t K) const;

 private:
  Template() = default;
  double checked_k(std::size_t k) const;

  TemplateKind kind_ = TemplateKind::linear;
  TemplateOrigin origin_ = TemplateOrigin::formula;
  std::size_t m_ = 0;
  std::size_t K_ = 0;
  std::vector<std::vector<double>> curves_;
};

inline constexpr double kEmptyPsi = std::numeric_limits<double>::infinity();

// Pivotal statistic min_{k <= K ∧ |A|} t_k^{-1}(p_(k:A)); kEmptyPsi for A = ∅.
double psi(const Template& tpl, const PValueVector& p, const IndexSet& A);

// Balanced template from B least-favorable draws. Deterministic given seed.
Template fit_balanced_known(const NullJointSampler& sampler, std::size_t K, std::size_t B,
                            std::uint64_t seed);

// Balanced template with curve k = {p_(k:m)(g_j . X)}_{j=1..B}. The first
// transform must be the identity.
Template fit_balanced_unknown(const Eigen::MatrixXd& data, const std::vector<SignVector>& transforms,
                              std::size_t K);

// Curve k = sorted {k-th smallest of draw j}_j.
Template balanced_from_pool(const NullPool& pool, std::size_t K, TemplateOrigin origin);

// {kind, m, K, curves?}; curves only when requested and present.
nlohmann::json to_json(const Template& tpl, bool with_curves);
Template template_from_json(const nlohmann::json& j);

}  // namespace posthoc
