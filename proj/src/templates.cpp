#include "posthoc/templates.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "posthoc/errors.hpp"

namespace posthoc {

TemplateKind parse_template_kind(const std::string& text) {
  if (text == "linear") return TemplateKind::linear;
  if (text == "balanced") return TemplateKind::balanced;
  throw InputError("template must be 'linear' or 'balanced'");
}

std::string to_string(TemplateKind kind) {
  return kind == TemplateKind::linear ? "linear" : "balanced";
}

namespace {

const char* origin_name(TemplateOrigin origin) {
  switch (origin) {
    case TemplateOrigin::formula:
      return "formula";
    case TemplateOrigin::null_sampler:
      return "null-sampler";
    case TemplateOrigin::exact_independent:
      return "exact-independent";
    case TemplateOrigin::observed_data:
      return "observed-data";
  }
  return "formula";
}

TemplateOrigin parse_origin(const std::string& text) {
  for (const auto o : {TemplateOrigin::formula, TemplateOrigin::null_sampler,
                       TemplateOrigin::exact_independent, TemplateOrigin::observed_data}) {
    if (text == origin_name(o)) return o;
  }
  throw InputError("unknown template origin '" + text + "'");
}

void check_size(std::size_t m, std::size_t K) {
  if (m == 0) throw InputError("template needs m >= 1");
  if (K < 1 || K > m) {
    throw InputError("template size K = " + std::to_string(K) + " must lie in 1..m (m = " +
                     std::to_string(m) + ")");
  }
}

}  // namespace

Template Template::linear(std::size_t m, std::size_t K) {
  check_size(m, K);
  Template t;
  t.kind_ = TemplateKind::linear;
  t.origin_ = TemplateOrigin::formula;
  t.m_ = m;
  t.K_ = K;
  return t;
}

Template Template::balanced(std::size_t m, std::vector<std::vector<double>> curves,
                            TemplateOrigin origin) {
  check_size(m, curves.size());
  if (origin == TemplateOrigin::formula || origin == TemplateOrigin::exact_independent) {
    throw InputError("sampled balanced templates need a sampler or data origin");
  }
  const auto B = curves.front().size();
  for (auto& curve : curves) {
    if (curve.empty() || curve.size() != B) {
      throw InputError("balanced curves must be non-empty and of equal length");
    }
    if (!std::is_sorted(curve.begin(), curve.end())) std::sort(curve.begin(), curve.end());
  }
  Template t;
  t.kind_ = TemplateKind::balanced;
  t.origin_ = origin;
  t.m_ = m;
  t.K_ = curves.size();
  t.curves_ = std::move(curves);
  return t;
}

Template Template::balanced_independent(std::size_t m, std::size_t K) {
  check_size(m, K);
  Template t;
  t.kind_ = TemplateKind::balanced;
  t.origin_ = TemplateOrigin::exact_independent;
  t.m_ = m;
  t.K_ = K;
  return t;
}

double Template::checked_k(std::size_t k) const {
  if (k < 1 || k > K_) {
    throw InputError("k = " + std::to_string(k) + " out of range 1.." + std::to_string(K_));
  }
  return static_cast<double>(k);
}

double Template::threshold(std::size_t k, double lambda) const {
  const double kd = checked_k(k);
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InputError("lambda must lie in [0,1]");
  if (lambda == 0.0) return 0.0;
  if (kind_ == TemplateKind::linear) return lambda * kd / static_cast<double>(m_);

  if (origin_ == TemplateOrigin::exact_independent) {
    // min{x : F_k(x) >= lambda} over doubles, by bisection on a continuous CDF.
    double lo = 0.0;
    double hi = 1.0;
    for (int it = 0; it < 2000; ++it) {
      const double mid = lo + (hi - lo) / 2.0;
      if (mid <= lo || mid >= hi) break;
      if (orderstat_cdf_independent(k, m_, mid) >= lambda) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    return hi;
  }

  // Smallest sample point whose empirical CDF c/B reaches lambda. c is fixed
  // up with the same division used by inverse() so the two stay consistent.
  const auto& curve = curves_[k - 1];
  const double B = static_cast<double>(curve.size());
  auto c = static_cast<std::size_t>(std::ceil(lambda * B));
  c = std::clamp<std::size_t>(c, 1, curve.size());
  while (c > 1 && static_cast<double>(c - 1) / B >= lambda) --c;
  while (c < curve.size() && static_cast<double>(c) / B < lambda) ++c;
  return curve[c - 1];
}

double Template::inverse(std::size_t k, double u) const {
  const double kd = checked_k(k);
  if (kind_ == TemplateKind::linear) {
    if (!(u >= 0.0)) return 0.0;
    return std::min(1.0, static_cast<double>(m_) * u / kd);
  }
  if (origin_ == TemplateOrigin::exact_independent) {
    if (!(u > 0.0)) return 0.0;
    if (u >= 1.0) return 1.0;
    return orderstat_cdf_independent(k, m_, u);
  }
  const auto& curve = curves_[k - 1];
  const auto count = std::upper_bound(curve.begin(), curve.end(), u) - curve.begin();
  return static_cast<double>(count) / static_cast<double>(curve.size());
}

std::vector<double> Template::thresholds(double lambda) const {
  std::vector<double> t(K_);
  for (std::size_t k = 1; k <= K_; ++k) t[k - 1] = threshold(k, lambda);
  return t;
}

double Template::psi_sorted(std::span<const double> sorted) const {
  const std::size_t limit = std::min(K_, sorted.size());
  double best = kEmptyPsi;
  for (std::size_t k = 1; k <= limit && best > 0.0; ++k) {
    best = std::min(best, inverse(k, sorted[k - 1]));
  }
  return best;
}

Template Template::truncated(std::size_t K) const {
  check_size(m_, K);
  if (K > K_) throw InputError("cannot extend a template by truncation");
  Template t = *this;
  t.K_ = K;
  if (!t.curves_.empty()) t.curves_.resize(K);
  return t;
}

double psi(const Template& tpl, const PValueVector& p, const IndexSet& A) {
  if (p.size() != tpl.m()) throw InputError("p-value count does not match the template's m");
  return tpl.psi_sorted(p.sorted_subset(A));
}

Template balanced_from_pool(const NullPool& pool, std::size_t K, TemplateOrigin origin) {
  check_size(pool.m(), K);
  std::vector<std::vector<double>> curves(K, std::vector<double>(pool.B()));
  for (std::size_t j = 0; j < pool.B(); ++j) {
    const auto s = pool.sorted(j);
    for (std::size_t k = 0; k < K; ++k) curves[k][j] = s[k];
  }
  return Template::balanced(pool.m(), std::move(curves), origin);
}

Template fit_balanced_known(const NullJointSampler& sampler, std::size_t K, std::size_t B,
                            std::uint64_t seed) {
  if (B < 1) throw InputError("B must be at least 1");
  return balanced_from_pool(sampler.draw_pool(B, seed), K, TemplateOrigin::null_sampler);
}

Template fit_balanced_unknown(const Eigen::MatrixXd& data, const std::vector<SignVector>& transforms,
                              std::size_t K) {
  if (transforms.empty() || !is_identity(transforms.front())) {
    throw InputError("the first transform must be the identity");
  }
  return balanced_from_pool(sign_flip_pool(data, transforms, Sidedness::two), K,
                            TemplateOrigin::observed_data);
}

nlohmann::json to_json(const Template& tpl, bool with_curves) {
  nlohmann::json j = {{"kind", to_string(tpl.kind())},
                      {"m", tpl.m()},
                      {"K", tpl.K()},
                      {"origin", origin_name(tpl.origin())}};
  if (with_curves && !tpl.curves().empty()) j["curves"] = tpl.curves();
  return j;
}

Template template_from_json(const nlohmann::json& j) {
  try {
    const auto kind = parse_template_kind(j.at("kind").get<std::string>());
    const auto m = j.at("m").get<std::size_t>();
    const auto K = j.at("K").get<std::size_t>();
    if (kind == TemplateKind::linear) return Template::linear(m, K);
    const auto origin = parse_origin(j.value("origin", std::string("null-sampler")));
    if (origin == TemplateOrigin::exact_independent) return Template::balanced_independent(m, K);
    if (!j.contains("curves")) throw InputError("balanced template JSON needs 'curves'");
    auto curves = j.at("curves").get<std::vector<std::vector<double>>>();
    if (curves.size() != K) throw InputError("balanced template JSON: K does not match curves");
    return Template::balanced(m, std::move(curves), origin);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed template JSON: ") + e.what());
  }
}

}  // namespace posthoc
