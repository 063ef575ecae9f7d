#include "posthoc/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <ostream>
#include <sstream>

#include "posthoc/calibration.hpp"
#include "posthoc/csv_io.hpp"
#include "posthoc/errors.hpp"
#include "posthoc/null_pool.hpp"
#include "posthoc/templates.hpp"

namespace posthoc {

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << "setting_id,m,n,rho_theta,pi0,mubar,alpha,template,K,mode,scenario,estimate,stderr,"
         "runs_used,seed\n";
  for (const auto& r : rows) {
    out << r.setting_id << ',' << r.m << ',' << r.n << ',' << format_double(r.rho_theta) << ','
        << format_double(r.pi0) << ',' << format_double(r.mubar) << ',' << format_double(r.alpha)
        << ',' << r.tmpl << ',' << r.K << ',' << r.mode << ',' << r.scenario << ','
        << format_double(r.estimate) << ',' << format_double(r.stderr_) << ',' << r.runs_used
        << ',' << r.seed << '\n';
  }
}

double bernoulli_stderr(double phat, std::size_t runs) {
  if (runs == 0) return 0.0;
  return std::sqrt(std::max(0.0, phat * (1.0 - phat)) / static_cast<double>(runs));
}

bool jer_violated(std::span<const double> thresholds, std::span<const double> sorted_h0) {
  const std::size_t limit = std::min(thresholds.size(), sorted_h0.size());
  for (std::size_t k = 0; k < limit; ++k) {
    if (sorted_h0[k] < thresholds[k]) return true;
  }
  return false;
}

bool jer_violated(const ThresholdFamily& family, const PValueVector& p, const IndexSet& h0) {
  if (p.size() != family.m()) throw InputError("p-value count does not match the family's m");
  return jer_violated(family.thresholds(), p.sorted_subset(h0));
}

bool jer_violated(const ReferenceFamily& family, const IndexSet& h0) {
  validate_index_set(h0, family.m());
  for (const auto& member : family.members()) {
    if (intersection_size(member.set, h0) > member.zeta) return true;
  }
  return false;
}

namespace {

std::string setting_name(const Covariance& cov, double pi0, double mubar) {
  std::ostringstream s;
  s << cov.to_string() << "/pi0=" << format_double(pi0) << "/mubar=" << format_double(mubar);
  return s.str();
}

double mean_of(const std::vector<std::uint8_t>& v) {
  if (v.empty()) return 0.0;
  std::size_t total = 0;
  for (const auto x : v) total += x;
  return static_cast<double>(total) / static_cast<double>(v.size());
}

}  // namespace

std::vector<ResultRow> run_table1(const Table1Config& cfg) {
  check_alpha(cfg.alpha);
  if (cfg.runs == 0) throw InputError("runs must be at least 1");
  if (cfg.rhos.empty()) throw InputError("no correlations given");
  std::vector<double> thresholds(cfg.m);
  for (std::size_t k = 1; k <= cfg.m; ++k) {
    thresholds[k - 1] = cfg.alpha * static_cast<double>(k) / static_cast<double>(cfg.m);
  }
  std::vector<ResultRow> rows;
  for (std::size_t c = 0; c < cfg.rhos.size(); ++c) {
    const NullJointSampler sampler(cfg.m, Covariance::equicorrelated(cfg.rhos[c]), Sidedness::one);
    std::vector<std::uint8_t> hit(cfg.runs, 0);
    parallel_for(cfg.runs, cfg.threads, [&](std::size_t r) {
      auto rng = make_rng(cfg.seed, c, r);
      auto q = sampler.draw(rng);
      std::sort(q.begin(), q.end());
      hit[r] = jer_violated(thresholds, q) ? 1 : 0;
    });
    const double jer = mean_of(hit);
    ResultRow row;
    row.setting_id = "table1/rho=" + format_double(cfg.rhos[c]);
    row.m = cfg.m;
    row.n = 1;
    row.rho_theta = cfg.rhos[c];
    row.pi0 = 1.0;
    row.alpha = cfg.alpha;
    row.tmpl = "linear";
    row.K = cfg.m;
    row.mode = "simes-fixed";
    row.scenario = "-";
    row.estimate = jer / cfg.alpha;
    row.stderr_ = bernoulli_stderr(jer, cfg.runs) / cfg.alpha;
    row.runs_used = cfg.runs;
    row.seed = cfg.seed;
    rows.push_back(row);
  }
  return rows;
}

std::vector<Table2Row> run_table2(std::size_t m, double alpha, const std::vector<std::size_t>& ks) {
  check_alpha(alpha);
  std::vector<Table2Row> rows;
  for (const auto k : ks) {
    if (k < 1 || k > m) throw InputError("k must lie in 1..m");
    const double x = alpha * static_cast<double>(k) / static_cast<double>(m);
    // Continuous law: P(p_(k) < x) = P(p_(k) <= x).
    rows.push_back({k, m, alpha, x, orderstat_cdf_independent(k, m, x)});
  }
  return rows;
}

void write_table2_csv(std::ostream& out, const std::vector<Table2Row>& rows) {
  out << "k,m,alpha,threshold,probability\n";
  for (const auto& r : rows) {
    out << r.k << ',' << r.m << ',' << format_double(r.alpha) << ',' << format_double(r.x) << ','
        << format_double(r.value) << '\n';
  }
}

ResultRow run_simes_iid(std::size_t m, double alpha, std::size_t runs, std::uint64_t seed,
                        unsigned threads) {
  check_alpha(alpha);
  if (runs == 0) throw InputError("runs must be at least 1");
  std::vector<double> thresholds(m);
  for (std::size_t k = 1; k <= m; ++k) {
    thresholds[k - 1] = alpha * static_cast<double>(k) / static_cast<double>(m);
  }
  std::vector<std::uint8_t> hit(runs, 0);
  parallel_for(runs, threads, [&](std::size_t r) {
    auto rng = make_rng(seed, 0x51e5, r);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<double> u(m);
    for (auto& v : u) v = unif(rng);
    std::sort(u.begin(), u.end());
    hit[r] = jer_violated(thresholds, u) ? 1 : 0;
  });
  const double jer = mean_of(hit);
  ResultRow row;
  row.setting_id = "simes-iid";
  row.m = m;
  row.n = 1;
  row.alpha = alpha;
  row.tmpl = "linear";
  row.K = m;
  row.mode = "simes-fixed";
  row.scenario = "-";
  row.estimate = jer;
  row.stderr_ = bernoulli_stderr(jer, runs);
  row.runs_used = runs;
  row.seed = seed;
  return row;
}

namespace {

// Sign-flip pools for datasets that equal a fixed noise matrix except for a
// constant shift on the first m1 <= `vary` rows. Rows from `vary` on are
// flipped and sorted once; each dataset then only redoes the top rows and
// merges. Column j of the flipped statistics is eps.s_j / sqrt(n) plus
// shift * sum(s_j) / sqrt(n), which can differ from a direct product in the
// last bit; identity transforms use test_statistics exactly.
class SharedNoiseFlips {
 public:
  SharedNoiseFlips(const Eigen::MatrixXd& eps, const std::vector<SignVector>& transforms,
                   std::size_t vary)
      : m_(static_cast<std::size_t>(eps.rows())),
        n_(static_cast<std::size_t>(eps.cols())),
        B_(transforms.size()),
        vary_(std::min(vary, m_)),
        identity_(B_, 0),
        colsum_(B_, 0.0) {
    const auto n = eps.cols();
    const auto B = static_cast<Eigen::Index>(B_);
    const double scale = 1.0 / std::sqrt(static_cast<double>(n_));
    Eigen::MatrixXd signs(n, B);
    for (Eigen::Index j = 0; j < B; ++j) {
      const auto& sv = transforms[static_cast<std::size_t>(j)];
      double sum = 0.0;
      for (Eigen::Index c = 0; c < n; ++c) {
        signs(c, j) = sv[static_cast<std::size_t>(c)];
        sum += sv[static_cast<std::size_t>(c)];
      }
      colsum_[static_cast<std::size_t>(j)] = sum * scale;
      identity_[static_cast<std::size_t>(j)] = is_identity(sv) ? 1 : 0;
    }
    Eigen::MatrixXd stats = eps * signs;
    stats *= scale;
    const auto observed = test_statistics(eps);
    top_ = stats.topRows(static_cast<Eigen::Index>(vary_));
    const std::size_t rest = m_ - vary_;
    fixed_sorted_.resize(rest * B_);
    fixed_order_.resize(rest * B_);
    std::vector<std::pair<double, std::uint32_t>> buf(rest);
    for (std::size_t j = 0; j < B_; ++j) {
      for (std::size_t r = 0; r < rest; ++r) {
        const std::size_t i = vary_ + r;
        const double t = identity_[j] ? observed[i]
                                      : stats(static_cast<Eigen::Index>(i),
                                              static_cast<Eigen::Index>(j));
        buf[r] = {pvalue(t, Sidedness::two), static_cast<std::uint32_t>(i)};
      }
      std::sort(buf.begin(), buf.end());
      for (std::size_t r = 0; r < rest; ++r) {
        fixed_sorted_[j * rest + r] = buf[r].first;
        fixed_order_[j * rest + r] = buf[r].second;
      }
    }
  }

  // `data` must be the noise with `shift` added to its first m1 rows.
  NullPool pool(const Eigen::MatrixXd& data, std::size_t m1, double shift) const {
    if (m1 > vary_) throw std::logic_error("signal rows exceed the varying block");
    const double scale = 1.0 / std::sqrt(static_cast<double>(n_));
    std::vector<double> observed(vary_);
    for (std::size_t i = 0; i < vary_; ++i) {
      observed[i] = data.row(static_cast<Eigen::Index>(i)).sum() * scale;
    }
    const std::size_t rest = m_ - vary_;
    std::vector<double> sorted(m_ * B_);
    std::vector<std::uint32_t> order(m_ * B_);
    std::vector<std::pair<double, std::uint32_t>> top(vary_);
    for (std::size_t j = 0; j < B_; ++j) {
      for (std::size_t i = 0; i < vary_; ++i) {
        double t;
        if (identity_[j]) {
          t = observed[i];
        } else {
          t = top_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
          if (i < m1) t += shift * colsum_[j];
        }
        top[i] = {pvalue(t, Sidedness::two), static_cast<std::uint32_t>(i)};
      }
      std::sort(top.begin(), top.end());
      // Merge by (p, index); every top index is below every fixed index.
      const double* fs = fixed_sorted_.data() + j * rest;
      const std::uint32_t* fo = fixed_order_.data() + j * rest;
      double* out_s = sorted.data() + j * m_;
      std::uint32_t* out_o = order.data() + j * m_;
      std::size_t a = 0;
      std::size_t b = 0;
      for (std::size_t r = 0; r < m_; ++r) {
        if (b >= rest || (a < vary_ && top[a].first <= fs[b])) {
          out_s[r] = top[a].first;
          out_o[r] = top[a].second;
          ++a;
        } else {
          out_s[r] = fs[b];
          out_o[r] = fo[b];
          ++b;
        }
      }
    }
    return NullPool::from_sorted(m_, B_, std::move(sorted), std::move(order));
  }

 private:
  std::size_t m_;
  std::size_t n_;
  std::size_t B_;
  std::size_t vary_;
  std::vector<char> identity_;
  std::vector<double> colsum_;
  Eigen::MatrixXd top_;
  std::vector<double> fixed_sorted_;
  std::vector<std::uint32_t> fixed_order_;
};

// One calibrated procedure inside a grid: a template (with its K) and the
// modes evaluated for it.
struct Procedure {
  TemplateKind kind;
  std::size_t K;
  std::vector<CalibrationMode> modes;
};

std::vector<Procedure> grid_procedures(const JerGridConfig& cfg) {
  std::vector<Procedure> procs;
  if (cfg.linear) {
    procs.push_back({TemplateKind::linear, cfg.m,
                     {CalibrationMode::fixed, CalibrationMode::single_step,
                      CalibrationMode::step_down, CalibrationMode::oracle}});
  }
  for (const auto K : cfg.balanced_K) {
    const std::size_t k = K == 0 ? cfg.m : K;
    if (k > cfg.m) throw InputError("balanced K exceeds m");
    procs.push_back({TemplateKind::balanced, k,
                     {CalibrationMode::single_step, CalibrationMode::step_down,
                      CalibrationMode::oracle}});
  }
  if (procs.empty()) throw InputError("grid has no procedures");
  return procs;
}

std::string mode_label(CalibrationMode mode) {
  return mode == CalibrationMode::fixed ? "simes-fixed" : to_string(mode);
}

// Runs every mode of one procedure on one dataset. Returns false when the
// step-down lambda sequence violates monotonicity.
bool evaluate_procedure(const PoolCalibrator& calibrator, const Procedure& proc,
                        const PValueVector& p, const IndexSet& h0, double alpha,
                        std::uint8_t* out) {
  const Template& tpl = calibrator.tpl();
  const auto sorted_h0 = p.sorted_subset(h0);
  bool monotone = true;
  double lambda_ss = -1.0;
  for (std::size_t i = 0; i < proc.modes.size(); ++i) {
    std::vector<double> thresholds;
    switch (proc.modes[i]) {
      case CalibrationMode::fixed:
        thresholds = tpl.thresholds(alpha);
        break;
      case CalibrationMode::single_step: {
        const auto cal = calibrator.calibrate(alpha, full_index_set(p.size()),
                                              CalibrationMode::single_step);
        lambda_ss = cal.lambda;
        thresholds = cal.thresholds;
        break;
      }
      case CalibrationMode::step_down: {
        std::vector<double> lambdas;
        const auto cal = step_down(
            [&](const IndexSet& A) {
              return calibrator.calibrate(alpha, A, CalibrationMode::single_step);
            },
            tpl, p, alpha, lambdas);
        for (std::size_t j = 1; j < lambdas.size(); ++j) {
          if (lambdas[j] < lambdas[j - 1]) monotone = false;
        }
        if (lambda_ss >= 0.0 && cal.lambda < lambda_ss) monotone = false;
        thresholds = cal.thresholds;
        break;
      }
      case CalibrationMode::oracle:
        thresholds = calibrator.calibrate(alpha, h0, CalibrationMode::oracle).thresholds;
        break;
    }
    out[i] = jer_violated(thresholds, sorted_h0) ? 1 : 0;
  }
  return monotone;
}

}  // namespace

JerGridResult run_jer_grid(const JerGridConfig& cfg) {
  check_alpha(cfg.alpha);
  if (cfg.runs == 0 || cfg.covs.empty() || cfg.pi0s.empty() || cfg.mubars.empty()) {
    throw InputError("grid needs runs >= 1 and non-empty parameter lists");
  }
  if (cfg.B < 2) throw InputError("B must be at least 2");
  const auto procs = grid_procedures(cfg);
  std::size_t slots = 0;  // (procedure, mode) pairs
  for (const auto& proc : procs) slots += proc.modes.size();
  const std::size_t cells_per_cov = cfg.pi0s.size() * cfg.mubars.size();
  const std::size_t cells = cfg.covs.size() * cells_per_cov;

  // hits[(cell * slots + slot) * runs + run]
  std::vector<std::uint8_t> hits(cells * slots * cfg.runs, 0);
  std::vector<std::uint8_t> bad(cfg.covs.size() * cfg.runs, 0);

  std::size_t m1max = 0;
  for (const auto pi0 : cfg.pi0s) {
    m1max = std::max(m1max, DataModel{cfg.m, cfg.n, {}, pi0, 0.0, 0}.m1());
  }
  std::size_t Kmax = 0;
  for (const auto& proc : procs) {
    if (proc.kind == TemplateKind::balanced) Kmax = std::max(Kmax, proc.K);
  }

  // Known dependence: one pool per covariance, shared by all runs.
  std::vector<std::vector<std::shared_ptr<const PoolCalibrator>>> known(cfg.covs.size());
  std::vector<NullJointSampler> noise;
  for (std::size_t c = 0; c < cfg.covs.size(); ++c) {
    noise.emplace_back(cfg.m, cfg.covs[c], Sidedness::two);
    if (!cfg.known) continue;
    const auto pool = std::make_shared<const NullPool>(
        noise.back().draw_pool(cfg.B, substream(cfg.seed, 0x900d, c)));
    std::optional<Template> balanced;
    if (Kmax > 0) {
      balanced = fit_balanced_known(noise.back(), Kmax, cfg.B, substream(cfg.seed, 0xba1, c));
    }
    for (const auto& proc : procs) {
      const Template tpl = proc.kind == TemplateKind::linear ? Template::linear(cfg.m, proc.K)
                                                             : balanced->truncated(proc.K);
      known[c].push_back(std::make_shared<const PoolCalibrator>(tpl, pool));
    }
  }

  parallel_for(cfg.covs.size() * cfg.runs, cfg.threads, [&](std::size_t task) {
    const std::size_t c = task / cfg.runs;
    const std::size_t run = task % cfg.runs;
    auto rng = make_rng(cfg.seed, 1 + c, run);
    const Eigen::MatrixXd eps = sample_noise(noise[c], cfg.n, rng);
    std::optional<SharedNoiseFlips> flips;
    if (!cfg.known) {
      flips.emplace(eps, draw_transforms(cfg.n, cfg.B, substream(cfg.seed, 0x5f, run)), m1max);
    }
    bool monotone = true;
    for (std::size_t a = 0; a < cfg.pi0s.size(); ++a) {
      for (std::size_t b = 0; b < cfg.mubars.size(); ++b) {
        DataModel model{cfg.m, cfg.n, cfg.covs[c], cfg.pi0s[a], cfg.mubars[b], cfg.seed};
        model.validate();
        Eigen::MatrixXd data = eps;
        add_signal(data, model);
        const IndexSet h0 = model.h0();
        const std::size_t cell = c * cells_per_cov + a * cfg.mubars.size() + b;
        std::uint8_t* out = hits.data();
        std::size_t slot = 0;
        const auto emit = [&](const PoolCalibrator& calibrator, const Procedure& proc,
                              const PValueVector& p) {
          std::vector<std::uint8_t> local(proc.modes.size());
          if (!evaluate_procedure(calibrator, proc, p, h0, cfg.alpha, local.data())) {
            monotone = false;
          }
          for (std::size_t i = 0; i < local.size(); ++i) {
            out[(cell * slots + slot + i) * cfg.runs + run] = local[i];
          }
          slot += proc.modes.size();
        };
        if (cfg.known) {
          const PValueVector p = pvalues(test_statistics(data), Sidedness::two);
          for (std::size_t i = 0; i < procs.size(); ++i) emit(known[c][i]->fork(), procs[i], p);
        } else {
          const auto pool = std::make_shared<const NullPool>(
              flips->pool(data, model.m1(), model.mubar / std::sqrt(static_cast<double>(cfg.n))));
          const PValueVector p = pool->draw(0);
          std::optional<PoolCalibrator> balanced;
          if (Kmax > 0) {
            balanced.emplace(
                PoolCalibrator::balanced_on_pool(pool, Kmax, TemplateOrigin::observed_data));
          }
          for (const auto& proc : procs) {
            if (proc.kind == TemplateKind::linear) {
              emit(PoolCalibrator(Template::linear(cfg.m, proc.K), pool), proc, p);
            } else {
              emit(balanced->truncated(proc.K), proc, p);
            }
          }
        }
      }
    }
    bad[task] = monotone ? 0 : 1;
  });

  JerGridResult result;
  for (const auto b : bad) result.monotonicity_violations += b;
  for (std::size_t c = 0; c < cfg.covs.size(); ++c) {
    for (std::size_t a = 0; a < cfg.pi0s.size(); ++a) {
      for (std::size_t b = 0; b < cfg.mubars.size(); ++b) {
        const std::size_t cell = c * cells_per_cov + a * cfg.mubars.size() + b;
        std::size_t slot = 0;
        for (const auto& proc : procs) {
          for (const auto mode : proc.modes) {
            const auto begin = hits.begin() + static_cast<std::ptrdiff_t>((cell * slots + slot) * cfg.runs);
            std::vector<std::uint8_t> ind(begin, begin + static_cast<std::ptrdiff_t>(cfg.runs));
            ResultRow row;
            row.setting_id = setting_name(cfg.covs[c], cfg.pi0s[a], cfg.mubars[b]);
            row.m = cfg.m;
            row.n = cfg.n;
            row.rho_theta = cfg.covs[c].param;
            row.pi0 = cfg.pi0s[a];
            row.mubar = cfg.mubars[b];
            row.alpha = cfg.alpha;
            row.tmpl = to_string(proc.kind);
            row.K = proc.K;
            row.mode = mode_label(mode);
            row.scenario = cfg.known ? "known" : "sign-flip";
            row.estimate = mean_of(ind);
            row.stderr_ = bernoulli_stderr(row.estimate, cfg.runs);
            row.runs_used = cfg.runs;
            row.seed = cfg.seed;
            result.rows.push_back(std::move(row));
            result.indicators.push_back(std::move(ind));
            ++slot;
          }
        }
      }
    }
  }
  return result;
}

std::optional<double> averaged_power(const ThresholdFamily& family, const PValueVector& p,
                                     const IndexSet& R, const IndexSet& h1) {
  const std::size_t denom = intersection_size(R, h1);
  if (denom == 0) return std::nullopt;
  return static_cast<double>(sbar(R, family, p)) / static_cast<double>(denom);
}

IndexSet benjamini_hochberg(const PValueVector& p, double level) {
  const auto order = p.ascending_order();
  const double m = static_cast<double>(p.size());
  std::size_t k = 0;
  for (std::size_t r = order.size(); r >= 1; --r) {
    if (p[order[r - 1]] <= level * static_cast<double>(r) / m) {
      k = r;
      break;
    }
  }
  IndexSet out(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

IndexSet weighted_half(const PValueVector& p, IndexSet R0, Rng& rng) {
  std::sort(R0.begin(), R0.end(), [&](std::size_t a, std::size_t b) {
    return p[a] < p[b] || (p[a] == p[b] && a < b);
  });
  const std::size_t size = R0.size();
  const std::size_t take = (size + 1) / 2;
  std::vector<double> weight(size);
  for (std::size_t r = 0; r < size; ++r) weight[r] = static_cast<double>(size - r);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  IndexSet out;
  for (std::size_t t = 0; t < take; ++t) {
    double total = 0.0;
    for (const auto w : weight) total += w;
    double u = unif(rng) * total;
    std::size_t pick = size;
    for (std::size_t r = 0; r < size; ++r) {
      if (weight[r] <= 0.0) continue;
      pick = r;
      if (u < weight[r]) break;
      u -= weight[r];
    }
    out.push_back(R0[pick]);
    weight[pick] = 0.0;
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

IndexSet select_scenario(char kind, const PValueVector& p, double alpha0, Rng& rng) {
  switch (kind) {
    case 'a':
      return full_index_set(p.size());
    case 'b': {
      IndexSet R0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= alpha0) R0.push_back(i);
      }
      return weighted_half(p, std::move(R0), rng);
    }
    case 'c':
      return weighted_half(p, benjamini_hochberg(p, alpha0), rng);
    default:
      throw InputError(std::string("unknown scenario '") + kind + "'");
  }
}

std::vector<double> default_power_alphas() {
  std::vector<double> a(20);
  const double lo = std::log(0.005);
  const double hi = std::log(0.5);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = std::exp(lo + (hi - lo) * static_cast<double>(i) / 19.0);
  }
  a.front() = 0.005;
  a.back() = 0.5;
  return a;
}

double power_mubar(double pi0) {
  if (!(pi0 >= 0.0 && pi0 < 1.0)) throw InputError("pi0 must lie in [0,1)");
  return std::sqrt(-4.0 * std::log(1.0 - pi0));
}

std::size_t resolve_K(const std::string& text, std::size_t m, std::size_t m1) {
  std::size_t K = 0;
  if (text == "m") {
    K = m;
  } else if (text == "2m1") {
    K = 2 * m1;
  } else {
    const auto v = parse_integer(text);
    if (v < 1) throw InputError("K must be positive");
    K = static_cast<std::size_t>(v);
  }
  return std::clamp<std::size_t>(K, 1, m);
}

std::vector<ResultRow> run_power_grid(const PowerGridConfig& cfg) {
  if (cfg.runs == 0 || cfg.pi0s.empty() || cfg.alphas.empty() || cfg.scenarios.empty()) {
    throw InputError("grid needs runs >= 1 and non-empty parameter lists");
  }
  for (const auto a : cfg.alphas) check_alpha(a);
  if (cfg.B < 2) throw InputError("B must be at least 2");
  const Covariance cov = Covariance::independent();
  const NullJointSampler noise(cfg.m, cov, Sidedness::two);

  std::shared_ptr<const NullPool> known_pool;
  std::optional<Template> known_balanced;
  if (cfg.known) {
    known_pool =
        std::make_shared<const NullPool>(noise.draw_pool(cfg.B, substream(cfg.seed, 0x900d)));
    known_balanced = fit_balanced_known(noise, cfg.m, cfg.B, substream(cfg.seed, 0xba1));
  }

  std::vector<ResultRow> rows;
  for (std::size_t a = 0; a < cfg.pi0s.size(); ++a) {
    DataModel model{cfg.m, cfg.n, cov, cfg.pi0s[a], power_mubar(cfg.pi0s[a]), cfg.seed};
    model.validate();
    const IndexSet h1 = model.h1();
    std::vector<std::pair<TemplateKind, std::size_t>> procs{{TemplateKind::linear, cfg.m}};
    for (const auto& k_text : cfg.balanced_K) {
      procs.emplace_back(TemplateKind::balanced, resolve_K(k_text, cfg.m, model.m1()));
    }
    const std::size_t S = cfg.scenarios.size();
    const std::size_t A = cfg.alphas.size();
    // value[((proc * A + alpha) * S + scenario) * runs + run], NaN when excluded
    std::vector<double> value(procs.size() * A * S * cfg.runs, 0.0);

    std::vector<std::shared_ptr<const PoolCalibrator>> known_cal;
    if (cfg.known) {
      for (const auto& [kind, K] : procs) {
        const Template tpl =
            kind == TemplateKind::linear ? Template::linear(cfg.m, K) : known_balanced->truncated(K);
        known_cal.push_back(std::make_shared<const PoolCalibrator>(tpl, known_pool));
      }
    }

    parallel_for(cfg.runs, cfg.threads, [&](std::size_t run) {
      auto rng = make_rng(cfg.seed, 0x90 + a, run);
      Eigen::MatrixXd data = sample_noise(noise, cfg.n, rng);
      add_signal(data, model);
      std::vector<PoolCalibrator> calibrators;
      std::optional<PValueVector> p;
      if (cfg.known) {
        p = pvalues(test_statistics(data), Sidedness::two);
        for (const auto& c : known_cal) calibrators.push_back(c->fork());
      } else {
        const auto transforms = draw_transforms(cfg.n, cfg.B, substream(cfg.seed, 0x5f, run));
        const auto pool =
            std::make_shared<const NullPool>(sign_flip_pool(data, transforms, Sidedness::two));
        p = pool->draw(0);
        const Template balanced = balanced_from_pool(*pool, cfg.m, TemplateOrigin::observed_data);
        for (const auto& [kind, K] : procs) {
          calibrators.emplace_back(
              kind == TemplateKind::linear ? Template::linear(cfg.m, K) : balanced.truncated(K),
              pool);
        }
      }
      auto srng = make_rng(cfg.seed, 0xabc + a, run);
      std::vector<IndexSet> sets;
      for (const char s : cfg.scenarios) sets.push_back(select_scenario(s, *p, 0.05, srng));
      for (std::size_t i = 0; i < procs.size(); ++i) {
        const auto& calibrator = calibrators[i];
        for (std::size_t al = 0; al < A; ++al) {
          const double alpha = cfg.alphas[al];
          const auto cal = step_down(
              [&](const IndexSet& set) {
                return calibrator.calibrate(alpha, set, CalibrationMode::single_step);
              },
              calibrator.tpl(), *p, alpha);
          const ThresholdFamily fam = materialize(cal);
          for (std::size_t s = 0; s < S; ++s) {
            const auto pw = averaged_power(fam, *p, sets[s], h1);
            value[((i * A + al) * S + s) * cfg.runs + run] = pw ? *pw : std::nan("");
          }
        }
      }
    });

    for (std::size_t i = 0; i < procs.size(); ++i) {
      for (std::size_t al = 0; al < A; ++al) {
        for (std::size_t s = 0; s < S; ++s) {
          const double* v = value.data() + ((i * A + al) * S + s) * cfg.runs;
          double sum = 0.0;
          std::size_t used = 0;
          for (std::size_t r = 0; r < cfg.runs; ++r) {
            if (std::isnan(v[r])) continue;
            sum += v[r];
            ++used;
          }
          const double mean = used > 0 ? sum / static_cast<double>(used) : 0.0;
          double ss = 0.0;
          for (std::size_t r = 0; r < cfg.runs; ++r) {
            if (!std::isnan(v[r])) ss += (v[r] - mean) * (v[r] - mean);
          }
          ResultRow row;
          row.setting_id = "power/pi0=" + format_double(cfg.pi0s[a]);
          row.m = cfg.m;
          row.n = cfg.n;
          row.rho_theta = 0.0;
          row.pi0 = cfg.pi0s[a];
          row.mubar = model.mubar;
          row.alpha = cfg.alphas[al];
          row.tmpl = to_string(procs[i].first);
          row.K = procs[i].second;
          row.mode = "step-down";
          row.scenario = std::string(1, cfg.scenarios[s]);
          row.estimate = mean;
          row.stderr_ = used > 1 ? std::sqrt(ss / static_cast<double>(used - 1) /
                                             static_cast<double>(used))
                                 : 0.0;
          row.runs_used = used;
          row.seed = cfg.seed;
          rows.push_back(std::move(row));
        }
      }
    }
  }
  return rows;
}

}  // namespace posthoc
