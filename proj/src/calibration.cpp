#include "posthoc/calibration.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <numeric>
#include <limits>
#include <stdexcept>

#include "posthoc/errors.hpp"

namespace posthoc {

std::string to_string(CalibrationMode mode) {
  switch (mode) {
    case CalibrationMode::fixed:
      return "fixed";
    case CalibrationMode::single_step:
      return "single-step";
    case CalibrationMode::step_down:
      return "step-down";
    case CalibrationMode::oracle:
      return "oracle";
  }
  return "fixed";
}

CalibrationMode parse_calibration_mode(const std::string& text) {
  for (const auto mode : {CalibrationMode::fixed, CalibrationMode::single_step,
                          CalibrationMode::step_down, CalibrationMode::oracle}) {
    if (text == to_string(mode)) return mode;
  }
  throw InputError("unknown calibration mode '" + text + "'");
}

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0,1)");
}

namespace {

// floor(alpha B), robust to products like 0.07 * 100 = 7.000000000000001.
std::size_t rank_index(double alpha, std::size_t B) {
  const double x = alpha * static_cast<double>(B);
  double r = std::floor(x);
  const double nearest = std::round(x);
  if (std::abs(x - nearest) <= 1e-9 * std::max(1.0, x)) r = nearest;
  return std::min(static_cast<std::size_t>(r), B - 1);
}

}  // namespace

double lambda_order_statistic(std::span<const double> psi, double alpha) {
  check_alpha(alpha);
  if (psi.empty()) throw InputError("empty pivotal sample");
  std::vector<double> work(psi.begin(), psi.end());
  const auto r = rank_index(alpha, work.size());
  std::nth_element(work.begin(), work.begin() + static_cast<std::ptrdiff_t>(r), work.end());
  return std::min(1.0, work[r]);
}

Calibration fixed_calibration(const Template& tpl, double alpha) {
  check_alpha(alpha);
  Calibration cal;
  cal.lambda = alpha;
  cal.alpha = alpha;
  cal.mode = CalibrationMode::fixed;
  cal.thresholds = tpl.thresholds(alpha);
  cal.K = tpl.K();
  cal.m = tpl.m();
  cal.set_used = full_index_set(tpl.m());
  cal.iterations = 0;
  return cal;
}

PoolCalibrator::PoolCalibrator(Template tpl, std::shared_ptr<const NullPool> pool) {
  if (!pool) throw std::invalid_argument("null pool");
  if (pool->m() != tpl.m()) throw InputError("pool and template disagree on m");
  auto core = std::make_shared<Core>(Core{std::move(tpl), std::move(pool), {}});
  const std::size_t K = core->tpl.K();
  const std::size_t B = core->pool->B();
  constexpr std::size_t kBaselineCap = 50'000'000;
  if (core->tpl.kind() == TemplateKind::balanced && K * B <= kBaselineCap) {
    core->baseline.resize(K * B);
    for (std::size_t j = 0; j < B; ++j) {
      const auto s = core->pool->sorted(j);
      for (std::size_t k = 1; k <= K; ++k) {
        core->baseline[j * K + k - 1] = core->tpl.inverse(k, s[k - 1]);
      }
    }
  }
  core_ = std::move(core);
}

namespace {

// Stable LSD radix sort of non-negative doubles (their bit patterns order
// like the values), carrying the original positions. Ties keep index order.
class RadixSorter {
 public:
  explicit RadixSorter(std::size_t n) : key_(n), key2_(n), idx_(n), idx2_(n) {}

  void set(std::size_t i, double v) { std::memcpy(&key_[i], &v, sizeof v); }

  void sort() {
    const std::size_t n = key_.size();
    std::iota(idx_.begin(), idx_.end(), 0u);
    std::array<std::array<std::uint32_t, 257>, 8> count{};
    for (std::size_t i = 0; i < n; ++i) {
      for (int d = 0; d < 8; ++d) ++count[d][((key_[i] >> (8 * d)) & 0xFF) + 1];
    }
    for (int d = 0; d < 8; ++d) {
      auto& c = count[d];
      if (c[((key_[0] >> (8 * d)) & 0xFF) + 1] == n) continue;  // one bucket
      for (int b = 0; b < 256; ++b) c[b + 1] += c[b];
      for (std::size_t i = 0; i < n; ++i) {
        const auto at = c[(key_[i] >> (8 * d)) & 0xFF]++;
        key2_[at] = key_[i];
        idx2_[at] = idx_[i];
      }
      key_.swap(key2_);
      idx_.swap(idx2_);
    }
  }

  double value(std::size_t r) const {
    double v;
    std::memcpy(&v, &key_[r], sizeof v);
    return v;
  }
  std::uint32_t index(std::size_t r) const { return idx_[r]; }

 private:
  std::vector<std::uint64_t> key_, key2_;
  std::vector<std::uint32_t> idx_, idx2_;
};

}  // namespace

PoolCalibrator PoolCalibrator::balanced_on_pool(std::shared_ptr<const NullPool> pool,
                                                std::size_t K, TemplateOrigin origin) {
  if (!pool) throw std::invalid_argument("null pool");
  const std::size_t m = pool->m();
  const std::size_t B = pool->B();
  if (K < 1 || K > m) throw InputError("template size K must lie in 1..m");
  std::vector<std::vector<double>> curves(K, std::vector<double>(B));
  std::vector<double> baseline(K * B);
  RadixSorter sorter(B);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t j = 0; j < B; ++j) sorter.set(j, pool->sorted(j)[k]);
    sorter.sort();
    // F_k at draw j's own value is the count of sample points <= it.
    std::size_t end = B;
    for (std::size_t r = B; r-- > 0;) {
      const double v = sorter.value(r);
      if (r + 1 < B && v != curves[k][r + 1]) end = r + 1;
      curves[k][r] = v;
      baseline[sorter.index(r) * K + k] = static_cast<double>(end) / static_cast<double>(B);
    }
  }
  auto core = std::make_shared<Core>(
      Core{Template::balanced(m, std::move(curves), origin), std::move(pool), std::move(baseline)});
  return PoolCalibrator(std::shared_ptr<const Core>(std::move(core)));
}

PoolCalibrator PoolCalibrator::truncated(std::size_t K) const {
  auto tpl = core_->tpl.truncated(K);
  std::vector<double> baseline;
  const std::size_t K0 = core_->tpl.K();
  if (!core_->baseline.empty()) {
    const std::size_t B = core_->pool->B();
    baseline.resize(K * B);
    for (std::size_t j = 0; j < B; ++j) {
      std::copy_n(core_->baseline.data() + j * K0, K, baseline.data() + j * K);
    }
  }
  auto core = std::make_shared<Core>(Core{std::move(tpl), core_->pool, std::move(baseline)});
  return PoolCalibrator(std::shared_ptr<const Core>(std::move(core)));
}

namespace {

struct Term {
  std::uint32_t rank;
  std::uint32_t pos;
  double lower;
};

// Psi of draw j restricted to the hypotheses in `mask` (|A| = size).
//
// For balanced templates every term F_r(p_(r:A)) is bounded below by
// base[r-1] = F_r(p_(r:m)) and, when the element sits at sorted position i,
// by base[i] = F_{i+1}(p_(i+1:m)) since F_r >= F_{i+1} pointwise. The terms
// are scanned once for bounds, and only those whose bound is below the running
// minimum are evaluated.
double psi_draw(const Template& tpl, const NullPool& pool, const std::vector<double>& baseline,
                std::size_t j, const std::vector<char>& mask, std::size_t size,
                std::vector<Term>& scratch) {
  const auto s = pool.sorted(j);
  const auto o = pool.order(j);
  const std::size_t K = tpl.K();
  const std::size_t limit = std::min(K, size);
  double best = kEmptyPsi;

  if (tpl.kind() == TemplateKind::linear) {
    const double md = static_cast<double>(tpl.m());
    std::size_t r = 0;
    for (std::size_t i = 0; i < s.size() && r < limit; ++i) {
      if (!mask[o[i]]) continue;
      ++r;
      // Same expression as Template::inverse.
      best = std::min(best, std::min(1.0, md * s[i] / static_cast<double>(r)));
    }
    return best;
  }

  if (baseline.empty()) {
    std::size_t r = 0;
    for (std::size_t i = 0; i < s.size() && r < limit; ++i) {
      if (!mask[o[i]]) continue;
      ++r;
      best = std::min(best, tpl.inverse(r, s[i]));
      if (best <= 0.0) break;
    }
    return best;
  }

  const double* base = baseline.data() + j * K;
  scratch.clear();
  std::size_t r = 0;
  std::size_t arg = 0;
  double arg_lower = kEmptyPsi;
  for (std::size_t i = 0; i < s.size() && r < limit; ++i) {
    if (!mask[o[i]]) continue;
    ++r;
    if (i + 1 == r) {
      best = std::min(best, base[r - 1]);  // exact
      continue;
    }
    double lower = base[r - 1];
    if (i < K) lower = std::max(lower, base[i]);
    if (lower < arg_lower) {
      arg_lower = lower;
      arg = scratch.size();
    }
    scratch.push_back({static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(i), lower});
  }
  if (best <= 0.0 || scratch.empty()) return best;
  if (arg_lower < best) {
    const auto& t = scratch[arg];
    best = std::min(best, tpl.inverse(t.rank, s[t.pos]));
    scratch[arg].lower = kEmptyPsi;
  }
  for (const auto& t : scratch) {
    if (t.lower >= best) continue;
    best = std::min(best, tpl.inverse(t.rank, s[t.pos]));
    if (best <= 0.0) break;
  }
  return best;
}

}  // namespace

std::shared_ptr<const std::vector<double>> PoolCalibrator::cached(const IndexSet& A) const {
  const std::size_t m = core_->tpl.m();
  const std::size_t B = core_->pool->B();
  validate_index_set(A, m);
  {
    std::lock_guard<std::mutex> lock(mutex_);
    const auto it = cache_.find(A);
    if (it != cache_.end()) return it->second;
  }
  auto sample = std::make_shared<std::vector<double>>(B, kEmptyPsi);
  if (!A.empty()) {
    const auto mask = index_mask(A, m);
    std::vector<Term> scratch;
    for (std::size_t j = 0; j < B; ++j) {
      (*sample)[j] = psi_draw(core_->tpl, *core_->pool, core_->baseline, j, mask, A.size(),
                              scratch);
    }
  }
  std::lock_guard<std::mutex> lock(mutex_);
  return cache_.emplace(A, std::move(sample)).first->second;
}

std::vector<double> PoolCalibrator::psi_sample(const IndexSet& A) const { return *cached(A); }

double PoolCalibrator::lambda(double alpha, const IndexSet& A) const {
  return lambda_order_statistic(*cached(A), alpha);
}

Calibration PoolCalibrator::calibrate(double alpha, const IndexSet& A,
                                      CalibrationMode mode) const {
  const auto sample = cached(A);
  Calibration cal;
  cal.lambda = lambda_order_statistic(*sample, alpha);
  cal.alpha = alpha;
  cal.set_used = A;
  cal.mode = mode;
  cal.B = core_->pool->B();
  cal.psi_sample = *sample;
  cal.thresholds = core_->tpl.thresholds(cal.lambda);
  cal.K = core_->tpl.K();
  cal.m = core_->tpl.m();
  if (static_cast<double>(cal.B) * alpha < 1.0) {
    cal.warnings.push_back("B < 1/alpha: lambda is the smallest pivotal value");
  }
  return cal;
}

Calibration calibrate_known(const Template& tpl, const NullJointSampler& sampler, double alpha,
                            const IndexSet& A, std::size_t B, std::uint64_t seed) {
  check_alpha(alpha);
  if (tpl.origin() == TemplateOrigin::observed_data) {
    throw InputError("known-dependence calibration needs a template that does not use the data");
  }
  if (sampler.m() != tpl.m()) throw InputError("sampler and template disagree on m");
  if (B < 1) throw InputError("B must be at least 1");
  auto pool = std::make_shared<const NullPool>(sampler.draw_pool(B, seed));
  return PoolCalibrator(tpl, std::move(pool)).calibrate(alpha, A, CalibrationMode::single_step);
}

Calibration calibrate_unknown(const Template& tpl, const Eigen::MatrixXd& data,
                              const std::vector<SignVector>& transforms, double alpha,
                              const IndexSet& A, Sidedness side) {
  check_alpha(alpha);
  if (transforms.size() < 2) throw InputError("randomization needs at least 2 transforms");
  if (!is_identity(transforms.front())) {
    throw InputError("the first transform must be the identity");
  }
  if (static_cast<std::size_t>(data.rows()) != tpl.m()) {
    throw InputError("data rows and template disagree on m");
  }
  auto pool = std::make_shared<const NullPool>(sign_flip_pool(data, transforms, side));
  return PoolCalibrator(tpl, std::move(pool)).calibrate(alpha, A, CalibrationMode::single_step);
}

Calibration step_down(const Calibrator& calibrator, const Template& tpl, const PValueVector& p,
                      double alpha, std::vector<double>& lambdas) {
  check_alpha(alpha);
  const std::size_t m = p.size();
  if (m != tpl.m()) throw InputError("p-value count does not match the template's m");
  lambdas.clear();
  IndexSet A = full_index_set(m);
  Calibration cal;
  std::size_t calls = 0;
  while (true) {
    cal = calibrator(A);
    ++calls;
    lambdas.push_back(cal.lambda);
    const double t1 = tpl.threshold(1, cal.lambda);
    IndexSet next;
    next.reserve(A.size());
    for (std::size_t i = 0; i < m; ++i) {
      if (p[i] >= t1) next.push_back(i);
    }
    if (next == A) break;
    if (calls > m + 1) throw std::logic_error("step-down did not terminate");
    A = std::move(next);
  }
  cal.mode = CalibrationMode::step_down;
  cal.iterations = calls;
  return cal;
}

Calibration step_down(const Calibrator& calibrator, const Template& tpl, const PValueVector& p,
                      double alpha) {
  std::vector<double> lambdas;
  return step_down(calibrator, tpl, p, alpha, lambdas);
}

ThresholdFamily materialize(const Calibration& cal) {
  return ThresholdFamily(cal.m, cal.thresholds);
}

}  // namespace posthoc
