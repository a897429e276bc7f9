// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any fail.
// Optional arguments select criteria by number.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tiltdid/data.hpp"
#include "tiltdid/estimators.hpp"
#include "tiltdid/interventions.hpp"
#include "tiltdid/simulation.hpp"

using namespace tiltdid;

namespace {

// Tolerances.
constexpr double kBiasBound = 0.02;
constexpr double kCoverageLow = 0.90;
constexpr double kCoverageHigh = 0.98;
constexpr double kClosedFormTol = 1e-4;
constexpr double kCompositionTol = 1e-10;
constexpr double kAdtTol = 0.01;
constexpr double kOracleMcSe = 2.0;
constexpr double kVarianceRel = 0.15;
constexpr double kDoubleRobustMcSe = 3.0;
constexpr double kCollapseTol = 1e-10;

// Fixed seeds.
constexpr std::uint64_t kSeedScenario1 = 101;
constexpr std::uint64_t kSeedScenario2 = 202;
constexpr std::uint64_t kSeedOracle = 303;
constexpr std::uint64_t kSeedCorrupted = 404;
constexpr std::uint64_t kSeedAdt = 505;
constexpr std::uint64_t kSeedCollapse = 606;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string fmt_sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

void print_study(const StudyResult& s) {
  std::cout << "    delta    truth     mean     bias    mc_se  coverage  mean_var  n*var_mc\n";
  for (const auto& r : s.rows) {
    std::printf("    %5.1f  %7.4f  %7.4f  %7.4f  %7.4f  %8.3f  %8.3f  %8.3f\n", r.delta, r.truth, r.mean_psi, r.bias,
                r.mc_se, r.coverage, r.mean_variance, r.scaled_mc_variance);
  }
  std::printf("    replicates %d, runtime %.1f s\n", s.config.replicates, s.runtime_seconds);
}

const StudyResult& scenario1_study() {
  static const StudyResult study = [] {
    StudyConfig c;
    c.scenario = 1;
    c.n = 2000;
    c.replicates = 300;
    c.folds = 5;
    c.seed = kSeedScenario1;
    for (int d = -5; d <= 5; ++d) c.deltas.push_back(d);
    c.keep_records = false;
    auto s = run_study(c);
    print_study(s);
    return s;
  }();
  return study;
}

Outcome criterion1() {
  const auto& s = scenario1_study();
  Outcome o{true, ""};
  double worst = 0.0;
  for (const auto& r : s.rows) {
    worst = std::max(worst, std::abs(r.bias));
    o.pass = o.pass && std::abs(r.bias) <= kBiasBound;
  }
  o.detail = "max |bias| = " + fmt(worst) + " (bound " + fmt(kBiasBound, 2) + ")";
  return o;
}

Outcome criterion2() {
  const auto& s = scenario1_study();
  Outcome o{true, ""};
  double lo = 1.0, hi = 0.0;
  for (const auto& r : s.rows) {
    lo = std::min(lo, r.coverage);
    hi = std::max(hi, r.coverage);
    o.pass = o.pass && r.coverage >= kCoverageLow && r.coverage <= kCoverageHigh;
  }
  o.detail = "coverage range [" + fmt(lo, 3) + ", " + fmt(hi, 3) + "] (required [0.90, 0.98])";
  return o;
}

Outcome criterion3() {
  StudyConfig c;
  c.scenario = 2;
  c.n = 2000;
  c.replicates = 300;
  c.seed = kSeedScenario2;
  c.deltas = {0.0, 10.0};
  c.keep_records = false;
  const auto s = run_study(c);
  print_study(s);
  const auto& at0 = s.rows[0];
  const auto& at10 = s.rows[1];
  Outcome o;
  o.pass = std::abs(at10.bias) > std::abs(at0.bias) && at10.coverage < at0.coverage;
  o.detail = "|bias| " + fmt(std::abs(at0.bias)) + " -> " + fmt(std::abs(at10.bias)) + ", coverage " +
             fmt(at0.coverage, 3) + " -> " + fmt(at10.coverage, 3) + " (delta 0 -> 10)";
  return o;
}

Outcome criterion4() {
  auto grid = std::make_shared<const DoseGrid>(1001);
  const auto q = tilt_density(DensityCurve::uniform(grid), 1.0);
  double closed = 0.0;
  for (std::size_t m = 0; m < grid->size(); ++m) {
    closed = std::max(closed, std::abs(q[m] - std::exp(grid->point(m)) / (std::numbers::e - 1.0)));
  }
  const auto base = parametric_density(Parametric{BetaDose{2, 5}}, grid);
  double composition = 0.0;
  for (auto [a, b] : std::vector<std::pair<double, double>>{{1.5, -0.7}, {-4, 9}, {3, 3}, {-10, 0.25}}) {
    const auto lhs = tilt_density(tilt_density(base, a), b);
    const auto rhs = tilt_density(base, a + b);
    for (std::size_t m = 0; m < grid->size(); ++m) composition = std::max(composition, std::abs(lhs[m] - rhs[m]));
  }
  Outcome o;
  o.pass = closed <= kClosedFormTol && composition <= kCompositionTol;
  o.detail = "closed form max err " + fmt_sci(closed) + " (tol 1e-4), composition max err " + fmt_sci(composition) +
             " (tol 1e-10)";
  return o;
}

Outcome criterion5() {
  auto grid = std::make_shared<const DoseGrid>();
  auto oracle = std::make_shared<const OracleNuisance>(ScenarioParams::make(1), grid);
  CrossFitOptions opts;
  opts.grid = grid;
  opts.fitter = [oracle](const PanelDataset&, std::span<const RowIndex>) {
    return std::static_pointer_cast<const NuisanceModel>(oracle);
  };
  const auto data = simulate_scenario({1, 2000, kSeedAdt, 0});
  const auto r = plugin_estimate(data, GaussianKernel{0.01, 0.5}, opts);
  Outcome o;
  o.pass = std::abs(r.psi_hat - 0.25) <= kAdtTol;
  o.detail = "plug-in " + fmt(r.psi_hat) + " vs 0.25 (tol 0.01)";
  return o;
}

Outcome criterion6() {
  StudyConfig c;
  c.scenario = 1;
  c.n = 2000;
  c.replicates = 500;
  c.seed = kSeedOracle;
  c.deltas = {-2.0, 0.0, 2.0};
  c.source = NuisanceSource::oracle;
  c.n_mc = 1000000;
  c.keep_records = false;
  const auto s = run_study(c);
  print_study(s);
  Outcome o{true, ""};
  for (const auto& r : s.rows) {
    o.pass = o.pass && std::abs(r.bias) <= kOracleMcSe * r.mc_se;
    o.detail += "delta " + fmt(r.delta, 0) + ": |bias|/mc_se = " + fmt(std::abs(r.bias) / r.mc_se, 2) + "; ";
  }
  o.detail += "(bound 2)";
  return o;
}

Outcome criterion7() {
  const auto& s = scenario1_study();
  Outcome o{true, ""};
  double worst = 0.0;
  for (const auto& r : s.rows) {
    const double rel = std::abs(r.mean_variance - r.scaled_mc_variance) / r.scaled_mc_variance;
    worst = std::max(worst, rel);
    o.pass = o.pass && rel <= kVarianceRel;
  }
  o.detail = "max |mean sigma^2 - n Var_MC| / n Var_MC = " + fmt(worst, 3) + " (bound 0.15)";
  return o;
}

Outcome criterion8() {
  StudyConfig c;
  c.scenario = 1;
  c.n = 2000;
  c.replicates = 500;
  c.seed = kSeedCorrupted;
  c.deltas = {0.0};
  c.source = NuisanceSource::oracle_corrupted;
  c.keep_records = false;
  const auto odds = run_study(c);
  print_study(odds);
  c.weight = CorrectionWeight::literal;
  const auto literal = run_study(c);
  print_study(literal);
  const double z_odds = std::abs(odds.rows[0].bias) / odds.rows[0].mc_se;
  const double z_lit = std::abs(literal.rows[0].bias) / literal.rows[0].mc_se;
  Outcome o;
  o.pass = z_odds <= kDoubleRobustMcSe && z_lit > kDoubleRobustMcSe;
  o.detail = "|bias|/mc_se: default " + fmt(z_odds, 2) + " (<= 3), literal " + fmt(z_lit, 2) + " (> 3)";
  return o;
}

Outcome criterion9() {
  const std::vector<double> deltas{-10, -5, -1, 0, 1, 5, 10};
  const std::vector<InterventionSpec> specs{ExponentialTilt{-3.0}, ExponentialTilt{2.0}, GaussianKernel{0.1, 0.5},
                                            MinimumDose{0.3}, Parametric{BetaDose{2, 3}}, ParametricShift{0.1, 0.1}};
  double worst_plugin = 0.0, worst_onestep = 0.0;
  for (int scenario : {1, 2}) {
    const auto data = simulate_scenario({scenario, 1500, kSeedCollapse, 0}).without_covariates();
    auto grid = std::make_shared<const DoseGrid>();
    const auto fit = fit_nuisance(data, all_rows(data), grid, {});
    std::vector<double> pi(grid->size()), mu(grid->size());
    fit->dose_density(Eigen::RowVectorXd(0), pi);
    fit->outcome_treated_curve(Eigen::RowVectorXd(0), mu);
    const DensityCurve base(grid, pi);
    for (const auto& spec : specs) {
      const double cpt = plugin_cpt(data, *fit, spec);
      const double upt = plugin_upt(data, apply_intervention(spec, base), mu);
      worst_plugin = std::max(worst_plugin, std::abs(cpt - upt));
    }
    CrossFitOptions opts;
    opts.seed = kSeedCollapse;
    const auto cond = onestep_crossfit_tilt(data, deltas, opts);
    const auto marg = onestep_marginal_tilt(data, deltas, opts);
    for (std::size_t t = 0; t < deltas.size(); ++t) {
      worst_onestep = std::max({worst_onestep, std::abs(cond[t].psi_hat - marg[t].psi_hat),
                                std::abs(cond[t].se - marg[t].se)});
    }
  }
  Outcome o;
  o.pass = worst_plugin <= kCollapseTol && worst_onestep <= kCollapseTol;
  o.detail = "plug-in max diff " + fmt_sci(worst_plugin) + ", one-step max diff " + fmt_sci(worst_onestep) +
             " (tol 1e-10)";
  return o;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome criterion10() {
  const std::filesystem::path dir = std::filesystem::path(TILTDID_TEST_TMP) / "acceptance";
  std::filesystem::create_directories(dir);
  const std::string exe = TILTDID_EXE;
  const auto panel = dir / "panel.csv";
  write_csv(simulate_scenario({2, 800, 9, 0}), panel);
  const std::vector<std::pair<std::string, std::string>> commands{
      {"estimate", "estimate " + panel.string() + " --delta-grid -3:3:1 --seed 4"},
      {"estimate-json", "estimate " + panel.string() + " --intervention parametric --distribution truncnorm:0.6,0.2 "
                                                     "--format json --literal-phi2-weight"},
      {"simulate", "simulate --scenario 2 --n 300 --reps 50 --delta-grid -1:1:1 --seed 8 --n-mc 100000"},
      {"density-curve", "density-curve --input " + panel.string() + " --delta-grid -2:2:2"},
  };
  Outcome o{true, ""};
  int compared = 0;
  for (const auto& [name, args] : commands) {
    std::string first;
    for (int run = 0; run < 2; ++run) {
      const auto out = dir / (name + "_" + std::to_string(run) + ".out");
      std::filesystem::remove(out);
      const auto cmd = exe + " " + args + " --output " + out.string() + " > " + (dir / "log.txt").string() + " 2>&1";
      const int status = std::system(cmd.c_str());
      if (status == -1 || WEXITSTATUS(status) != 0 || !std::filesystem::exists(out)) {
        o.pass = false;
        o.detail += name + " failed to run; ";
        break;
      }
      if (run == 0) {
        first = slurp(out);
      } else {
        ++compared;
        if (slurp(out) != first) {
          o.pass = false;
          o.detail += name + " output differs; ";
        }
      }
    }
  }
  o.detail += std::to_string(compared) + " of " + std::to_string(commands.size()) +
              " commands compared byte-for-byte across repeated runs";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"bias, scenario 1", criterion1},
      {"coverage, scenario 1", criterion2},
      {"scenario 2 degradation at delta 10", criterion3},
      {"closed-form tilt and composition", criterion4},
      {"ADT recovery with kernel intervention", criterion5},
      {"oracle-nuisance unbiasedness", criterion6},
      {"variance consistency", criterion7},
      {"double-robustness weight orientation", criterion8},
      {"UPT/CPT collapse", criterion9},
      {"CLI determinism", criterion10},
  };
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !o.pass;
    std::printf("criterion %2d %s: %s (%s) [%.1f s]\n", id, o.pass ? "PASS" : "FAIL", criteria[k].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
