// posthoc: calibrate reference families, bound user-chosen sets, reproduce
// the simulation tables and figures, and run the local JSON service.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "posthoc/bounds.hpp"
#include "posthoc/csv_io.hpp"
#include "posthoc/errors.hpp"
#include "posthoc/experiments.hpp"
#include "posthoc/gaussian_models.hpp"
#include "posthoc/pipeline.hpp"
#include "posthoc/service.hpp"

// After Eigen: <resolv.h>, pulled in by httplib, defines _res.
#include <CLI11.hpp>
#include <httplib.h>

namespace {

using namespace posthoc;
using nlohmann::json;

unsigned threads_or_env(unsigned flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("POSTHOC_THREADS")) {
    const long long v = parse_integer(env);
    if (v < 0) throw InputError("POSTHOC_THREADS must be non-negative");
    return static_cast<unsigned>(v);
  }
  return 0;
}

// Writes to `path`, or stdout for "" / "-".
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out << text;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
}

std::vector<std::int64_t> parse_index_list(const std::string& text) {
  std::vector<std::int64_t> out;
  for (const auto& part : split(text, ',')) {
    if (part.empty()) continue;
    out.push_back(parse_integer(part));
  }
  return out;
}

struct CalibrateArgs {
  std::string pvalues, data, out;
  bool header = false;
  std::string method = "simes", cov = "indep", tmpl = "linear", sided = "two";
  std::size_t K = 0, B = 0;
  double alpha = 0.25;
  std::uint64_t seed = 0;
  bool step_down = false;
};

int cmd_calibrate(const CalibrateArgs& a) {
  CalibrationRequest r;
  r.kind = parse_template_kind(a.tmpl);
  r.K = a.K;
  r.alpha = a.alpha;
  r.method = parse_method(a.method);
  r.cov = Covariance::parse(a.cov);
  r.side = parse_sidedness(a.sided);
  r.B = a.B;
  r.seed = a.seed;
  r.step_down = a.step_down;
  std::optional<PValueVector> p;
  std::optional<Eigen::MatrixXd> X;
  if (!a.pvalues.empty()) p = read_pvalues_csv(a.pvalues, a.header);
  if (!a.data.empty()) X = read_matrix_csv(a.data, a.header);
  const auto result = run_calibration(r, p, X ? &*X : nullptr);
  for (const auto& w : result.calibration.warnings) std::cerr << "warning: " << w << '\n';
  emit(a.out, to_json(result).dump(2) + "\n");
  return 0;
}

struct BoundArgs {
  std::string calibration, pvalues, data, set, out;
  bool header = false;
  std::optional<std::size_t> top_k;
  bool vstar = false;
  std::size_t vstar_cap = kDefaultVstarCap;
};

int cmd_bound(const BoundArgs& a) {
  const json cal = read_json_file(a.calibration);
  const ThresholdFamily family = threshold_family_from_json(cal);
  std::optional<PValueVector> p;
  if (!a.pvalues.empty()) {
    p = read_pvalues_csv(a.pvalues, a.header);
  } else {
    const Sidedness side = cal.contains("sided")
                               ? parse_sidedness(cal.at("sided").get<std::string>())
                               : Sidedness::two;
    p = pvalues(test_statistics(read_matrix_csv(a.data, a.header)), side);
  }
  if (p->size() != family.m()) {
    throw InputError("calibration is for m = " + std::to_string(family.m()) +
                     " but the p-values have m = " + std::to_string(p->size()));
  }
  if (a.top_k) {
    if (*a.top_k > p->size()) throw InputError("--top-k exceeds m");
    emit(a.out, top_k_csv(top_k_curve(family, *p, *a.top_k)));
    return 0;
  }
  const IndexSet R = index_set_from_one_based(parse_index_list(a.set), p->size());
  json out = to_json(bound(R, family, *p));
  if (a.vstar) {
    out["vstar"] = vstar_bruteforce(R, family.materialize(*p), a.vstar_cap);
  }
  emit(a.out, out.dump() + "\n");
  return 0;
}

struct ReproduceArgs {
  std::string target, out;
  std::optional<std::size_t> runs, B, m, n;
  std::uint64_t seed = 1;
  unsigned threads = 0;
  bool paper_scale = false, toeplitz = false;
  std::optional<bool> known;
};

std::vector<Covariance> grid_covs(bool toeplitz) {
  if (toeplitz) {
    return {Covariance::toeplitz(-2), Covariance::toeplitz(-1), Covariance::toeplitz(-0.5),
            Covariance::toeplitz(-0.2)};
  }
  return {Covariance::equicorrelated(0.0), Covariance::equicorrelated(0.2),
          Covariance::equicorrelated(0.4)};
}

int cmd_reproduce(const ReproduceArgs& a) {
  const unsigned threads = threads_or_env(a.threads);
  std::ostringstream out;
  if (a.target == "table2") {
    write_table2_csv(out, run_table2());
  } else if (a.target == "table1") {
    Table1Config cfg;
    cfg.seed = a.seed;
    cfg.threads = threads;
    if (a.runs) cfg.runs = *a.runs;
    if (a.m) cfg.m = *a.m;
    write_results_csv(out, run_table1(cfg));
  } else if (a.target == "fig3" || a.target == "fig4") {
    JerGridConfig cfg;
    if (a.paper_scale) {
      cfg.m = cfg.n = 1000;
      cfg.runs = 10'000;
      cfg.B = 1000;
    }
    if (a.runs) cfg.runs = *a.runs;
    if (a.B) cfg.B = *a.B;
    if (a.m) cfg.m = *a.m;
    if (a.n) cfg.n = *a.n;
    cfg.covs = grid_covs(a.toeplitz);
    cfg.known = a.known.value_or(false);
    cfg.seed = a.seed;
    cfg.threads = threads;
    if (a.target == "fig4") {
      cfg.linear = false;
      cfg.balanced_K = {10, 0};
    }
    write_results_csv(out, run_jer_grid(cfg).rows);
  } else if (a.target == "fig5") {
    PowerGridConfig cfg;
    if (a.paper_scale) {
      cfg.m = cfg.n = 1000;
      cfg.runs = 10'000;
      cfg.B = 1000;
    }
    if (a.runs) cfg.runs = *a.runs;
    if (a.B) cfg.B = *a.B;
    if (a.m) cfg.m = *a.m;
    if (a.n) cfg.n = *a.n;
    cfg.known = a.known.value_or(true);
    cfg.seed = a.seed;
    cfg.threads = threads;
    write_results_csv(out, run_power_grid(cfg));
  } else {
    throw InputError("unknown target " + a.target + " (table1, table2, fig3, fig4, fig5)");
  }
  emit(a.out, out.str());
  return 0;
}

struct SimulateArgs {
  std::size_t m = 200, n = 100;
  std::string cov = "indep", out, pvalues_out, sided = "two";
  double pi0 = 0.9, mubar = 3.0;
  std::uint64_t seed = 1;
};

int cmd_simulate(const SimulateArgs& a) {
  DataModel model;
  model.m = a.m;
  model.n = a.n;
  model.cov = Covariance::parse(a.cov);
  model.pi0 = a.pi0;
  model.mubar = a.mubar;
  model.seed = a.seed;
  const Eigen::MatrixXd X = sample_dataset(model);
  std::ostringstream data;
  write_matrix_csv(data, X);
  emit(a.out, data.str());
  if (!a.pvalues_out.empty()) {
    const PValueVector p = pvalues(test_statistics(X), parse_sidedness(a.sided));
    std::ostringstream pv;
    for (std::size_t i = 0; i < p.size(); ++i) pv << format_double(p[i]) << '\n';
    emit(a.pvalues_out, pv.str());
  }
  return 0;
}

struct ServeArgs {
  std::string host = "127.0.0.1", snapshot, ui;
  int port = 8787;
};

httplib::Server* g_server = nullptr;

void stop_server(int) {
  if (g_server != nullptr) g_server->stop();
}

int cmd_serve(const ServeArgs& a) {
  ServiceOptions options;
  options.snapshot_path = a.snapshot;
  Service service(options);
  httplib::Server server;
  service.bind(server);
  if (!a.ui.empty() && !server.set_mount_point("/ui", a.ui)) {
    throw InputError("cannot serve UI assets from " + a.ui);
  }
  g_server = &server;
  std::signal(SIGINT, stop_server);
  std::signal(SIGTERM, stop_server);
  std::cerr << "listening on http://" << a.host << ':' << a.port << '\n';
  if (!server.listen(a.host, a.port)) {
    std::cerr << "error: cannot listen on " << a.host << ':' << a.port << '\n';
    return 1;
  }
  g_server = nullptr;
  service.wait_idle();
  service.save_snapshot();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Post hoc bounds on false positives with JER-controlling reference families"};
  app.require_subcommand(1);

  CalibrateArgs ca;
  auto* cal = app.add_subcommand("calibrate", "calibrate a reference family, write JSON");
  auto* cal_p = cal->add_option("--pvalues", ca.pvalues, "p-values CSV")->check(CLI::ExistingFile);
  auto* cal_d = cal->add_option("--data", ca.data, "m x n data CSV")->check(CLI::ExistingFile);
  cal_p->excludes(cal_d);
  cal_d->excludes(cal_p);
  cal->add_flag("--header", ca.header, "skip the first CSV line");
  cal->add_option("--method", ca.method, "simes | mc-known | sign-flip")->capture_default_str();
  cal->add_option("--cov", ca.cov, "indep | equi:RHO | toeplitz:THETA (mc-known)")
      ->capture_default_str();
  cal->add_option("--sided", ca.sided, "one | two")->capture_default_str();
  cal->add_option("--template", ca.tmpl, "linear | balanced")->capture_default_str();
  cal->add_option("--K", ca.K, "number of thresholds (default m)");
  cal->add_option("--alpha", ca.alpha, "JER level")->capture_default_str();
  cal->add_option("--B", ca.B, "null draws or transforms");
  cal->add_option("--seed", ca.seed)->capture_default_str();
  cal->add_flag("--step-down", ca.step_down, "step-down calibration");
  cal->add_option("--out", ca.out, "output file (default stdout)");

  BoundArgs ba;
  auto* bnd = app.add_subcommand("bound", "post hoc bound for a set or the top-k curve");
  bnd->add_option("--calibration", ba.calibration, "calibration JSON")
      ->required()
      ->check(CLI::ExistingFile);
  auto* b_p = bnd->add_option("--pvalues", ba.pvalues, "p-values CSV")->check(CLI::ExistingFile);
  auto* b_d = bnd->add_option("--data", ba.data, "m x n data CSV")->check(CLI::ExistingFile);
  b_p->excludes(b_d);
  b_d->excludes(b_p);
  bnd->add_flag("--header", ba.header, "skip the first CSV line");
  auto* b_set = bnd->add_option("--set", ba.set, "1-based indices, comma separated");
  auto* b_top = bnd->add_option("--top-k", ba.top_k, "S̄ curve of the top-k' sets, k' = 1..N");
  b_set->excludes(b_top);
  b_top->excludes(b_set);
  bnd->add_flag("--vstar", ba.vstar, "also compute the exact bound by enumeration");
  bnd->add_option("--vstar-cap", ba.vstar_cap, "largest m for --vstar")->capture_default_str();
  bnd->add_option("--out", ba.out, "output file (default stdout)");

  ReproduceArgs ra;
  auto* rep = app.add_subcommand("reproduce", "rerun a simulation table or figure, write CSV");
  rep->add_option("target", ra.target, "table1 | table2 | fig3 | fig4 | fig5")->required();
  rep->add_option("--runs", ra.runs, "replications");
  rep->add_option("--B", ra.B, "null draws or transforms per run");
  rep->add_option("--m", ra.m, "number of hypotheses");
  rep->add_option("--n", ra.n, "observations per hypothesis");
  rep->add_option("--seed", ra.seed)->capture_default_str();
  rep->add_option("--threads", ra.threads, "workers (0: POSTHOC_THREADS or all cores)");
  rep->add_flag("--paper-scale", ra.paper_scale, "m = n = 1000, 10^4 runs (hours)");
  rep->add_flag("--toeplitz", ra.toeplitz, "Toeplitz covariance grid (fig3, fig4)");
  rep->add_flag("--known,!--unknown", ra.known, "known-dependence calibration");
  rep->add_option("--out", ra.out, "output file (default stdout)");

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "draw a dataset from the Gaussian location model");
  sim->add_option("--m", sa.m)->capture_default_str();
  sim->add_option("--n", sa.n)->capture_default_str();
  sim->add_option("--cov", sa.cov)->capture_default_str();
  sim->add_option("--pi0", sa.pi0)->capture_default_str();
  sim->add_option("--mubar", sa.mubar)->capture_default_str();
  sim->add_option("--seed", sa.seed)->capture_default_str();
  sim->add_option("--out", sa.out, "data CSV (default stdout)");
  sim->add_option("--pvalues-out", sa.pvalues_out, "also write the p-values");
  sim->add_option("--sided", sa.sided, "p-values for --pvalues-out")->capture_default_str();

  ServeArgs sv;
  auto* srv = app.add_subcommand("serve", "run the local JSON service");
  srv->add_option("--port", sv.port)->capture_default_str();
  srv->add_option("--host", sv.host)->capture_default_str();
  srv->add_option("--snapshot", sv.snapshot, "session snapshot file, loaded and saved");
  srv->add_option("--ui", sv.ui, "static UI assets, served under /ui");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (cal->parsed()) {
      if (ca.pvalues.empty() && ca.data.empty()) throw InputError("give --pvalues or --data");
      return cmd_calibrate(ca);
    }
    if (bnd->parsed()) {
      if (ba.pvalues.empty() && ba.data.empty()) throw InputError("give --pvalues or --data");
      if (ba.set.empty() && !ba.top_k && b_set->count() == 0) {
        throw InputError("give --set or --top-k");
      }
      return cmd_bound(ba);
    }
    if (rep->parsed()) return cmd_reproduce(ra);
    if (sim->parsed()) return cmd_simulate(sa);
    if (srv->parsed()) return cmd_serve(sv);
  } catch (const RefusedError& e) {
    std::cerr << "refused: " << e.what() << '\n';
    return 1;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
