#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "posthoc/gaussian_models.hpp"
#include "posthoc/index_set.hpp"
#include "posthoc/null_pool.hpp"
#include "posthoc/pvalues.hpp"
#include "posthoc/reference_family.hpp"
#include "posthoc/templates.hpp"

namespace posthoc {

enum class CalibrationMode { fixed, single_step, step_down, oracle };

std::string to_string(CalibrationMode mode);
CalibrationMode parse_calibration_mode(const std::string& text);

struct Calibration {
  double lambda = 0.0;
  double alpha = 0.0;
  IndexSet set_used;
  CalibrationMode mode = CalibrationMode::single_step;
  std::size_t B = 0;
  std::vector<double> psi_sample;  // draw order; empty for fixed
  std::vector<double> thresholds;  // t_k(lambda), k = 1..K
  std::size_t K = 0;
  std::size_t m = 0;
  std::size_t iterations = 1;
  std::vector<std::string> warnings;
};

// Psi_(floor(alpha B) + 1) of a sample of pivotal values. An all-infinite
// sample (A = ∅) gives 1: nothing can be violated.
double lambda_order_statistic(std::span<const double> psi, double alpha);

void check_alpha(double alpha);

// lambda = alpha, no resampling: the Simes family for linear templates.
Calibration fixed_calibration(const Template& tpl, double alpha);

// Pivotal values over a fixed pool of null draws. The pool is shared by every
// A evaluated here, which keeps lambda(alpha, A) exactly non-increasing in A.
// Thread-safe; results for each A are cached.
class PoolCalibrator {
 public:
  PoolCalibrator(Template tpl, std::shared_ptr<const NullPool> pool);
  PoolCalibrator(PoolCalibrator&& other) noexcept
      : core_(std::move(other.core_)), cache_(std::move(other.cache_)) {}
  PoolCalibrator(const PoolCalibrator&) = delete;
  PoolCalibrator& operator=(const PoolCalibrator&) = delete;

  const Template& tpl() const noexcept { return core_->tpl; }
  const NullPool& pool() const noexcept { return *core_->pool; }

  // Balanced template fitted on the pool itself, built together with its
  // pruning bounds (one sort per curve).
  static PoolCalibrator balanced_on_pool(std::shared_ptr<const NullPool> pool, std::size_t K,
                                         TemplateOrigin origin);

  // Same template and pool with an empty cache; cheap.
  PoolCalibrator fork() const { return PoolCalibrator(core_); }

  // Same pool, template truncated to its first K curves.
  PoolCalibrator truncated(std::size_t K) const;

  // Psi(q_j, A) for every draw j, in draw order.
  std::vector<double> psi_sample(const IndexSet& A) const;
  double lambda(double alpha, const IndexSet& A) const;
  Calibration calibrate(double alpha, const IndexSet& A, CalibrationMode mode) const;

 private:
  struct Core {
    Template tpl;
    std::shared_ptr<const NullPool> pool;
    // Per-draw lower bounds inverse(k, p_(k:m)) for pruning balanced templates.
    std::vector<double> baseline;
  };

  explicit PoolCalibrator(std::shared_ptr<const Core> core) : core_(std::move(core)) {}
  std::shared_ptr<const std::vector<double>> cached(const IndexSet& A) const;

  std::shared_ptr<const Core> core_;
  mutable std::mutex mutex_;
  mutable std::map<IndexSet, std::shared_ptr<const std::vector<double>>> cache_;
};

// Known dependence: B draws from the least-favorable law, draw j from
// substream (seed, j). Templates fitted on observed data are rejected.
Calibration calibrate_known(const Template& tpl, const NullJointSampler& sampler, double alpha,
                            const IndexSet& A, std::size_t B, std::uint64_t seed);

// Unknown dependence: Psi over p(g_j . X) for the given sign-flip transforms.
Calibration calibrate_unknown(const Template& tpl, const Eigen::MatrixXd& data,
                              const std::vector<SignVector>& transforms, double alpha,
                              const IndexSet& A, Sidedness side = Sidedness::two);

using Calibrator = std::function<Calibration(const IndexSet&)>;

// Iterates A <- {i : p_i >= t_1(lambda(alpha, A))} from the full set until A
// stops changing. The returned calibration has mode step_down and records
// the number of calibrator calls.
Calibration step_down(const Calibrator& calibrator, const Template& tpl, const PValueVector& p,
                      double alpha);

// Full trace of lambda values, one per calibrator call (for invariant checks).
Calibration step_down(const Calibrator& calibrator, const Template& tpl, const PValueVector& p,
                      double alpha, std::vector<double>& lambdas);

ThresholdFamily materialize(const Calibration& cal);

}  // namespace posthoc
