#include "posthoc/gaussian_models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "posthoc/csv_io.hpp"
#include "posthoc/errors.hpp"

namespace posthoc {

Covariance Covariance::equicorrelated(double rho) {
  if (!(rho >= 0.0 && rho < 1.0)) throw InputError("equi-correlation rho must lie in [0,1)");
  return {CovarianceKind::equicorrelated, rho};
}

Covariance Covariance::toeplitz(double theta) {
  if (!(theta < 0.0)) throw InputError("Toeplitz exponent theta must be negative");
  return {CovarianceKind::toeplitz, theta};
}

Covariance Covariance::parse(const std::string& text) {
  if (text == "indep" || text == "independent") return independent();
  const auto colon = text.find(':');
  if (colon != std::string::npos) {
    const auto head = text.substr(0, colon);
    const double value = parse_double(text.substr(colon + 1));
    if (head == "equi") return equicorrelated(value);
    if (head == "toeplitz") return toeplitz(value);
  }
  throw InputError("unknown covariance '" + text + "' (expected indep, equi:RHO or toeplitz:THETA)");
}

std::string Covariance::to_string() const {
  switch (kind) {
    case CovarianceKind::independent:
      return "indep";
    case CovarianceKind::equicorrelated:
      return "equi:" + format_double(param);
    case CovarianceKind::toeplitz:
      return "toeplitz:" + format_double(param);
  }
  return "indep";
}

Sidedness parse_sidedness(const std::string& text) {
  if (text == "one") return Sidedness::one;
  if (text == "two") return Sidedness::two;
  throw InputError("sidedness must be 'one' or 'two'");
}

std::string to_string(Sidedness side) { return side == Sidedness::one ? "one" : "two"; }

double normal_upper_tail(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

namespace {

inline double pvalue_of(double stat, Sidedness side) {
  return side == Sidedness::two ? std::erfc(std::fabs(stat) / std::numbers::sqrt2)
                                : normal_upper_tail(stat);
}

}  // namespace

double pvalue(double stat, Sidedness side) { return pvalue_of(stat, side); }

NullJointSampler::NullJointSampler(std::size_t m, Covariance cov, Sidedness side)
    : m_(m), cov_(cov), side_(side) {
  if (m == 0) throw InputError("sampler needs m >= 1");
  if (cov_.kind == CovarianceKind::equicorrelated) Covariance::equicorrelated(cov_.param);
  if (cov_.kind == CovarianceKind::toeplitz) {
    Covariance::toeplitz(cov_.param);
    const auto mi = static_cast<Eigen::Index>(m);
    Eigen::MatrixXd sigma(mi, mi);
    for (Eigen::Index i = 0; i < mi; ++i) {
      for (Eigen::Index j = 0; j < mi; ++j) {
        sigma(i, j) = std::pow(1.0 + static_cast<double>(std::abs(i - j)), cov_.param);
      }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) {
      sigma.diagonal().array() += 1e-10;
      llt.compute(sigma);
    }
    if (llt.info() != Eigen::Success) {
      throw InputError("Toeplitz covariance with theta = " + format_double(cov_.param) +
                       " is not positive definite for m = " + std::to_string(m));
    }
    cholesky_ = llt.matrixL();
  }
}

void NullJointSampler::draw_noise(Rng& rng, std::span<double> out) const {
  std::normal_distribution<double> normal;
  switch (cov_.kind) {
    case CovarianceKind::independent:
      for (auto& v : out) v = normal(rng);
      break;
    case CovarianceKind::equicorrelated: {
      // eps = sqrt(rho) W 1 + sqrt(1 - rho) Z
      const double shared = std::sqrt(cov_.param) * normal(rng);
      const double scale = std::sqrt(1.0 - cov_.param);
      for (auto& v : out) v = shared + scale * normal(rng);
      break;
    }
    case CovarianceKind::toeplitz: {
      Eigen::VectorXd z(static_cast<Eigen::Index>(m_));
      for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
      const Eigen::VectorXd eps = cholesky_.triangularView<Eigen::Lower>() * z;
      std::copy(eps.data(), eps.data() + eps.size(), out.begin());
      break;
    }
  }
}

std::vector<double> NullJointSampler::draw(Rng& rng) const {
  std::vector<double> q(m_);
  draw_noise(rng, q);
  for (auto& v : q) v = pvalue_of(v, side_);
  return q;
}

NullPool NullJointSampler::draw_pool(std::size_t B, std::uint64_t seed) const {
  std::vector<double> values(m_ * B);
  for (std::size_t j = 0; j < B; ++j) {
    auto rng = make_rng(seed, j);
    const std::span<double> col(values.data() + j * m_, m_);
    draw_noise(rng, col);
    for (auto& v : col) v = pvalue_of(v, side_);
  }
  return NullPool(m_, B, values);
}

std::size_t DataModel::m1() const {
  return static_cast<std::size_t>(std::llround(static_cast<double>(m) * (1.0 - pi0)));
}

IndexSet DataModel::h1() const { return full_index_set(m1()); }

IndexSet DataModel::h0() const { return complement(h1(), m); }

double DataModel::mu(std::size_t i) const {
  return i < m1() ? mubar / std::sqrt(static_cast<double>(n)) : 0.0;
}

void DataModel::validate() const {
  if (m == 0 || n == 0) throw InputError("data model needs m >= 1 and n >= 1");
  if (!(pi0 >= 0.0 && pi0 <= 1.0)) throw InputError("pi0 must lie in [0,1]");
  if (!(mubar >= 0.0)) throw InputError("mubar must be non-negative");
}

Eigen::MatrixXd sample_noise(const NullJointSampler& noise, std::size_t n, Rng& rng) {
  Eigen::MatrixXd data(static_cast<Eigen::Index>(noise.m()), static_cast<Eigen::Index>(n));
  for (Eigen::Index j = 0; j < data.cols(); ++j) {
    noise.draw_noise(rng, std::span<double>(data.col(j).data(), noise.m()));
  }
  return data;
}

void add_signal(Eigen::MatrixXd& data, const DataModel& model) {
  const auto m1 = static_cast<Eigen::Index>(model.m1());
  const double shift = model.mubar / std::sqrt(static_cast<double>(model.n));
  data.topRows(m1).array() += shift;
}

Eigen::MatrixXd sample_dataset(const DataModel& model, Rng& rng) {
  model.validate();
  const NullJointSampler noise(model.m, model.cov, Sidedness::two);
  Eigen::MatrixXd data = sample_noise(noise, model.n, rng);
  add_signal(data, model);
  return data;
}

Eigen::MatrixXd sample_dataset(const DataModel& model) {
  auto rng = make_rng(model.seed);
  return sample_dataset(model, rng);
}

std::vector<double> test_statistics(const Eigen::MatrixXd& data) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(data.cols()));
  std::vector<double> t(static_cast<std::size_t>(data.rows()));
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < data.cols(); ++j) sum += data(i, j);
    t[static_cast<std::size_t>(i)] = sum * scale;
  }
  return t;
}

PValueVector pvalues(std::span<const double> stats, Sidedness side) {
  std::vector<double> p(stats.size());
  std::transform(stats.begin(), stats.end(), p.begin(),
                 [side](double t) { return pvalue_of(t, side); });
  return PValueVector(std::move(p));
}

SignVector SignFlipGroup::draw(Rng& rng) const {
  SignVector s(n);
  std::uint64_t bits = 0;
  for (std::size_t j = 0; j < n; ++j) {
    if (j % 64 == 0) bits = rng();
    s[j] = (bits & 1u) ? std::int8_t{1} : std::int8_t{-1};
    bits >>= 1;
  }
  return s;
}

bool is_identity(const SignVector& s) {
  return std::all_of(s.begin(), s.end(), [](std::int8_t v) { return v == 1; });
}

Eigen::MatrixXd sign_flip(const Eigen::MatrixXd& data, const SignVector& s) {
  if (static_cast<Eigen::Index>(s.size()) != data.cols()) {
    throw InputError("sign vector length must equal the number of columns");
  }
  Eigen::MatrixXd out = data;
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    if (s[static_cast<std::size_t>(j)] < 0) out.col(j) = -out.col(j);
  }
  return out;
}

std::vector<SignVector> draw_transforms(std::size_t n, std::size_t B, Rng& rng) {
  const SignFlipGroup group{n};
  std::vector<SignVector> out;
  out.reserve(B);
  if (B == 0) return out;
  out.push_back(group.identity());
  for (std::size_t j = 1; j < B; ++j) out.push_back(group.draw(rng));
  return out;
}

std::vector<SignVector> draw_transforms(std::size_t n, std::size_t B, std::uint64_t seed) {
  auto rng = make_rng(seed, 0x5167);
  return draw_transforms(n, B, rng);
}

std::string encode_signs(const SignVector& s) {
  std::string out(s.size(), '+');
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (s[j] < 0) out[j] = '-';
  }
  return out;
}

SignVector decode_signs(const std::string& text) {
  SignVector s(text.size());
  for (std::size_t j = 0; j < text.size(); ++j) {
    if (text[j] == '+') {
      s[j] = 1;
    } else if (text[j] == '-') {
      s[j] = -1;
    } else {
      throw InputError("sign strings may only contain '+' and '-'");
    }
  }
  return s;
}

NullPool sign_flip_pool(const Eigen::MatrixXd& data, const std::vector<SignVector>& transforms,
                        Sidedness side) {
  const auto n = data.cols();
  const auto B = static_cast<Eigen::Index>(transforms.size());
  if (B == 0) throw InputError("at least one transform is required");
  Eigen::MatrixXd signs(n, B);
  for (Eigen::Index j = 0; j < B; ++j) {
    const auto& s = transforms[static_cast<std::size_t>(j)];
    if (static_cast<Eigen::Index>(s.size()) != n) {
      throw InputError("transform length must equal the number of columns");
    }
    for (Eigen::Index c = 0; c < n; ++c) signs(c, j) = s[static_cast<std::size_t>(c)];
  }
  Eigen::MatrixXd stats = data * signs;
  stats *= 1.0 / std::sqrt(static_cast<double>(n));
  const auto observed = test_statistics(data);
  for (Eigen::Index j = 0; j < B; ++j) {
    if (is_identity(transforms[static_cast<std::size_t>(j)])) {
      std::copy(observed.begin(), observed.end(), stats.col(j).data());
    }
  }
  for (Eigen::Index idx = 0; idx < stats.size(); ++idx) {
    stats.data()[idx] = pvalue_of(stats.data()[idx], side);
  }
  return NullPool(static_cast<std::size_t>(data.rows()), transforms.size(),
                  std::span<const double>(stats.data(), static_cast<std::size_t>(stats.size())));
}

double orderstat_cdf_independent(std::size_t k, std::size_t m, double x) {
  if (!(x >= 0.0 && x <= 1.0)) throw InputError("x must lie in [0,1]");
  if (k == 0) return 1.0;
  if (k > m) return 0.0;
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_x = std::log(x);
  const double log_1mx = std::log1p(-x);
  const double md = static_cast<double>(m);
  // Sum whichever tail is away from the mode; the other follows by complement.
  const bool upper = static_cast<double>(k) - 1.0 >= md * x;
  const std::size_t lo = upper ? k : 0;
  const std::size_t hi = upper ? m : k - 1;

  double log_choose = 0.0;  // log C(m, j), built incrementally up to j = lo
  for (std::size_t j = 0; j < lo; ++j) {
    log_choose += std::log(md - static_cast<double>(j)) - std::log(static_cast<double>(j) + 1.0);
  }
  std::vector<double> terms;
  terms.reserve(hi - lo + 1);
  for (std::size_t j = lo;; ++j) {
    const double jd = static_cast<double>(j);
    terms.push_back(log_choose + jd * log_x + (md - jd) * log_1mx);
    if (j == hi) break;
    log_choose += std::log(md - jd) - std::log(jd + 1.0);
  }
  const double peak = *std::max_element(terms.begin(), terms.end());
  double sum = 0.0;
  for (const double t : terms) sum += std::exp(t - peak);
  const double tail = std::exp(peak + std::log(sum));
  return upper ? std::min(1.0, tail) : std::clamp(1.0 - tail, 0.0, 1.0);
}

}  // namespace posthoc
