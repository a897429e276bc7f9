#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "doctest.h"
#include "test_support.hpp"
#include "tiltdid/error.hpp"
#include "tiltdid/estimators.hpp"
#include "tiltdid/simulation.hpp"

using namespace tiltdid;

namespace {

// Covariate-free nuisances with mu_d = slope * d, mu_0 = 0 and a fixed dose
// density on the grid.
struct ExactModel final : NuisanceModel {
  std::shared_ptr<const DoseGrid> g;
  std::vector<double> density;
  double slope = 0.5;
  double propensity = 0.5;

  ExactModel(std::shared_ptr<const DoseGrid> grid, std::vector<double> pi) : g(std::move(grid)), density(std::move(pi)) {}
  const std::shared_ptr<const DoseGrid>& grid_ptr() const override { return g; }
  double outcome_treated(double dose, CovariateRow) const override { return slope * dose; }
  double outcome_untreated(CovariateRow) const override { return 0.0; }
  double treated_probability(CovariateRow) const override { return propensity; }
  std::size_t dose_density(CovariateRow, std::span<double> out) const override {
    std::copy(density.begin(), density.end(), out.begin());
    return 0;
  }
};

// Treated doses are exactly the grid points, untreated dY = 0, treated
// dY = 0.5 D: no noise, and the empirical dose law equals the uniform grid law.
PanelDataset grid_dose_data(const DoseGrid& grid) {
  std::vector<double> a, y1;
  for (std::size_t m = 0; m < grid.size(); ++m) {
    a.push_back(grid.point(m));
    y1.push_back(0.5 * grid.point(m));
    a.push_back(0.0);
    y1.push_back(0.0);
  }
  return PanelDataset(std::vector<double>(a.size(), 0.0), y1, a, RowMatrix(static_cast<Eigen::Index>(a.size()), 0));
}

std::vector<double> curve_of(const NuisanceModel& model, const DoseGrid& grid) {
  std::vector<double> out(grid.size());
  model.outcome_treated_curve(Eigen::RowVectorXd(0), out);
  return out;
}

}  // namespace

TEST_CASE("plug-in UPT: constant outcome curve") {
  auto grid = std::make_shared<const DoseGrid>();
  const auto d = test_support::linear_dose_data(90, 0);
  std::vector<double> flat(grid->size(), 2.5);
  double untreated = 0.0;
  std::size_t n0 = 0;
  for (RowIndex i = 0; i < d.size(); ++i) {
    if (!d.treated(i)) {
      untreated += d.dy(i);
      ++n0;
    }
  }
  const auto q = tilt_density(parametric_density(Parametric{BetaDose{3, 2}}, grid), 1.7);
  CHECK(plugin_upt(d, q, flat) == doctest::Approx(2.5 - untreated / static_cast<double>(n0)).epsilon(1e-14));
}

TEST_CASE("plug-in UPT: uniform q and the point-mass limit") {
  auto grid = std::make_shared<const DoseGrid>();
  const auto d = test_support::linear_dose_data(600, 0);
  std::vector<RowIndex> treated;
  for (RowIndex i = 0; i < d.size(); ++i) {
    if (d.treated(i)) treated.push_back(i);
  }
  const auto mu = fit_outcome_treated(d, treated, LearnerSpec::ols());
  std::vector<double> curve(grid->size());
  mu.curve(*grid, Eigen::RowVectorXd(0), curve);
  CHECK(std::abs(plugin_upt(d, DensityCurve::uniform(grid), curve) - 0.25) <= 1e-4);
  const auto spike = gaussian_kernel_density(DensityCurve::uniform(grid), 0.01, 0.5);
  CHECK(std::abs(plugin_upt(d, spike, curve) - 0.25) <= 2e-3);
}

TEST_CASE("plug-in CPT collapses to UPT without covariates") {
  auto grid = std::make_shared<const DoseGrid>();
  const auto d = simulate_scenario({2, 1500, 8, 0}).without_covariates();
  const auto fit = fit_nuisance(d, all_rows(d), grid, {});
  std::vector<double> pi(grid->size());
  fit->dose_density(Eigen::RowVectorXd(0), pi);
  const auto curve = curve_of(*fit, *grid);
  for (const InterventionSpec& spec : std::vector<InterventionSpec>{
           ExponentialTilt{-3.0}, ExponentialTilt{0.0}, ExponentialTilt{4.0}, GaussianKernel{0.1, 0.3},
           MinimumDose{0.4}, Parametric{BetaDose{2, 2}}}) {
    const auto q = apply_intervention(spec, DensityCurve(grid, pi));
    // plugin_upt uses the untreated mean; CPT with intercept-only mu_0 uses the
    // same mean through least squares.
    CHECK(std::abs(plugin_cpt(d, *fit, spec) - plugin_upt(d, q, curve)) <= 1e-10);
  }
}

TEST_CASE("plug-in CPT with oracle nuisances is centred on the truth") {
  auto grid = std::make_shared<const DoseGrid>();
  const auto params = ScenarioParams::make(1);
  const OracleNuisance oracle(params, grid);
  const auto truth = oracle_truth(1, ExponentialTilt{0.0}, 200000, 3, grid);
  CHECK(std::abs(truth.truth - 0.25) <= 1e-12);  // symmetric Beta doses

  std::vector<double> estimates;
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    estimates.push_back(plugin_cpt(simulate_scenario({1, 500, seed, 0}), oracle, ExponentialTilt{0.0}));
  }
  const double mean = std::accumulate(estimates.begin(), estimates.end(), 0.0) / 200.0;
  double ss = 0.0;
  for (double e : estimates) ss += (e - mean) * (e - mean);
  const double mc_se = std::sqrt(ss / 199.0 / 200.0);
  CHECK(std::abs(mean - truth.truth) <= 2.0 * std::hypot(mc_se, truth.mc_se));
}

TEST_CASE("plug-in with oracle nuisances: trend component is the treated mean of X gamma") {
  auto grid = std::make_shared<const DoseGrid>();
  const auto params = ScenarioParams::make(1);
  const auto d = simulate_scenario({1, 4000, 12, 0});
  CrossFitOptions opts;
  opts.grid = grid;
  auto oracle = std::make_shared<const OracleNuisance>(params, grid);
  opts.fitter = [oracle](const PanelDataset&, std::span<const RowIndex>) {
    return std::static_pointer_cast<const NuisanceModel>(oracle);
  };
  const auto res = plugin_estimate(d, ExponentialTilt{0.0}, opts);
  double trend = 0.0, dose = 0.0;
  for (RowIndex i = 0; i < d.size(); ++i) {
    if (!d.treated(i)) continue;
    trend += params.outcome_untreated(d.x(i));
    dose += 0.5 * d.a(i);
  }
  const auto n_t = static_cast<double>(d.treated_count());
  CHECK(res.psi2_hat == doctest::Approx(trend / n_t).epsilon(1e-12));
  // 0.5 E[D | A > 0] up to sampling noise of the doses (sd about 0.15 / sqrt(n_t)).
  CHECK(std::abs(res.psi_hat - dose / n_t) <= 0.02);
  CHECK(std::isnan(res.se));
  CHECK_FALSE(res.diagnostics.warnings.empty());
}

TEST_CASE("one-step fold: exact nuisances on noise-free data leave the plug-in unchanged") {
  auto grid = std::make_shared<const DoseGrid>();
  const auto d = grid_dose_data(*grid);
  const ExactModel model(grid, std::vector<double>(grid->size(), 1.0));
  const auto rows = all_rows(d);
  const auto out = onestep_fold(d, rows, model, 0.0);
  CHECK(std::abs(out.psi - out.plugin) <= 1e-14);
  CHECK(std::abs(out.psi - 0.25) <= 1e-14);
  const double mean = std::accumulate(out.eif.begin(), out.eif.end(), 0.0) / static_cast<double>(out.eif.size());
  CHECK(std::abs(mean + out.plugin - out.psi) <= 1e-10);
}

TEST_CASE("one-step fold: influence values average to psi minus plug-in") {
  auto grid = std::make_shared<const DoseGrid>();
  const auto d = simulate_scenario({2, 800, 4, 0});
  const auto folds = assign_folds(d, 2, 9);
  const auto fit = fit_nuisance(d, folds.rows_outside(0), grid, {});
  const auto rows = folds.rows_in(0);
  for (double delta : {-4.0, 0.0, 6.0}) {
    for (auto w : {CorrectionWeight::odds, CorrectionWeight::literal}) {
      const auto out = onestep_fold(d, rows, *fit, delta, w);
      const double mean = std::accumulate(out.eif.begin(), out.eif.end(), 0.0) / static_cast<double>(out.eif.size());
      CHECK(std::abs(mean + out.plugin - out.psi) <= 1e-10);
      CHECK(out.psi == doctest::Approx(out.psi1 - out.psi2).epsilon(1e-15));
    }
  }
  const auto q = parametric_density(Parametric{BetaDose{2, 3}}, grid);
  const auto fixed = onestep_fold_fixed(d, rows, *fit, q);
  const double mean = std::accumulate(fixed.eif.begin(), fixed.eif.end(), 0.0) / static_cast<double>(fixed.eif.size());
  CHECK(std::abs(mean + fixed.plugin - fixed.psi) <= 1e-10);
}

TEST_CASE("fixed-law one-step: exact nuisances and no noise") {
  auto grid = std::make_shared<const DoseGrid>();
  const auto d = test_support::linear_dose_data(500, 0);
  std::vector<double> pi(grid->size());
  for (std::size_t m = 0; m < pi.size(); ++m) pi[m] = 0.5 + grid->point(m);
  const ExactModel model(grid, pi);
  const auto q = parametric_density(Parametric{TruncNormalDose{0.7, 0.15}}, grid);
  const auto out = onestep_fold_fixed(d, all_rows(d), model, q);
  std::vector<double> mu(grid->size());
  for (std::size_t m = 0; m < mu.size(); ++m) mu[m] = 0.5 * grid->point(m);
  CHECK(std::abs(out.psi - grid->integrate_product(mu, q.values())) <= 1e-12);
}

TEST_CASE("variance from influence values") {
  std::vector<double> zeros(100, 0.0);
  const auto v0 = variance_plugin(zeros, 0.3);
  CHECK(v0.variance == 0.0);
  CHECK(v0.ci_low == 0.3);
  CHECK(v0.ci_high == 0.3);
  std::vector<double> alt(400);
  for (std::size_t i = 0; i < alt.size(); ++i) alt[i] = i % 2 == 0 ? 1.0 : -1.0;
  const auto v1 = variance_plugin(alt, 0.0);
  CHECK(v1.variance == doctest::Approx(1.0));
  CHECK(v1.se == doctest::Approx(1.0 / 20.0));
  CHECK(v1.ci_high == doctest::Approx(1.959963984540054 / 20.0).epsilon(1e-12));
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-14));
  const auto v90 = variance_plugin(alt, 0.0, 0.90);
  CHECK(v90.ci_high == doctest::Approx(1.6448536269514722 / 20.0).epsilon(1e-12));
}

TEST_CASE("cross-fit aggregation, invariants and determinism") {
  const auto d = simulate_scenario({1, 2000, 17, 0});
  CrossFitOptions opts;
  opts.keep_eif = true;
  opts.seed = 4;
  const auto r = onestep_crossfit(d, ExponentialTilt{1.0}, opts);
  REQUIRE(r.per_fold.size() == 5);
  double agg = 0.0;
  std::size_t total = 0;
  for (const auto& f : r.per_fold) {
    agg += static_cast<double>(f.size) / static_cast<double>(d.size()) * f.psi;
    total += f.size;
  }
  CHECK(total == d.size());
  CHECK(r.psi_hat == agg);
  CHECK(r.ci_low <= r.psi_hat);
  CHECK(r.psi_hat <= r.ci_high);
  CHECK(r.se >= 0.0);
  REQUIRE(r.eif_values.size() == d.size());
  const double mean = std::accumulate(r.eif_values.begin(), r.eif_values.end(), 0.0) / static_cast<double>(d.size());
  CHECK(std::abs(mean) <= 1e-8);
  double ss = 0.0;
  for (double v : r.eif_values) ss += v * v;
  CHECK(r.variance == doctest::Approx(ss / static_cast<double>(d.size())).epsilon(1e-12));

  const auto again = onestep_crossfit(d, ExponentialTilt{1.0}, opts);
  CHECK(again.psi_hat == r.psi_hat);
  CHECK(again.se == r.se);
  CHECK(again.eif_values == r.eif_values);

  auto serial = opts;
  serial.execution = Execution::serial;
  const auto s = onestep_crossfit(d, ExponentialTilt{1.0}, serial);
  CHECK(s.psi_hat == r.psi_hat);
  CHECK(s.variance == r.variance);

  auto two = opts;
  two.folds = 2;
  const auto r2 = onestep_crossfit(d, ExponentialTilt{1.0}, two);
  CHECK(std::abs(r2.psi_hat - r.psi_hat) < 3.0 * r.se);
}

TEST_CASE("cross-fit tracks the oracle across delta, including the limits") {
  const auto d = simulate_scenario({1, 2000, 27, 0});
  const std::vector<double> deltas{-50, -10, -5, 0, 5, 10, 50};
  CrossFitOptions opts;
  opts.seed = 5;
  const auto est = onestep_crossfit_tilt(d, deltas, opts);
  const auto truth = oracle_truth_tilt(1, deltas, 100000, 6);
  for (std::size_t t = 0; t < deltas.size(); ++t) {
    INFO("delta = " << deltas[t]);
    CHECK(std::abs(est[t].psi_hat - truth[t].truth) <= 3.0 * est[t].se);
    if (t > 0) CHECK(truth[t].truth > truth[t - 1].truth);
  }
  CHECK(truth.front().truth <= 0.03);
  CHECK(truth.back().truth >= 0.47);
}

TEST_CASE("one-step for fixed laws") {
  const auto d = simulate_scenario({1, 2000, 33, 0});
  auto grid = std::make_shared<const DoseGrid>();
  CrossFitOptions opts;
  opts.grid = grid;
  const auto uniform = onestep_crossfit(d, Parametric{UniformDose{}}, opts);
  CHECK(std::abs(uniform.psi_hat - 0.25) <= 3.0 * uniform.se);

  // The marginal fitted dose law as a fixed curve estimates the same functional
  // as the delta = 0 tilt when mu is linear in the dose.
  const auto fit = fit_nuisance(d, all_rows(d), grid, {});
  std::vector<double> avg(grid->size(), 0.0), row(grid->size());
  for (RowIndex i = 0; i < d.size(); ++i) {
    if (!d.treated(i)) continue;
    fit->dose_density(d.x(i), row);
    for (std::size_t m = 0; m < row.size(); ++m) avg[m] += row[m];
  }
  const auto q = DensityCurve::normalized(grid, avg);
  const auto fixed = onestep_parametric(d, q, opts);
  const auto tilt = onestep_crossfit(d, ExponentialTilt{0.0}, opts);
  CHECK(std::abs(fixed.psi_hat - tilt.psi_hat) <= 3.0 * tilt.se);
}

TEST_CASE("data-dependent families other than the tilt have no one-step") {
  const auto d = simulate_scenario({1, 300, 1, 0});
  CrossFitOptions opts;
  for (const InterventionSpec& spec :
       std::vector<InterventionSpec>{GaussianKernel{0.1, 0.5}, MinimumDose{0.3}, ParametricShift{0.1, 0.1}}) {
    try {
      onestep_crossfit(d, spec, opts);
      FAIL("no error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::unsupported_intervention_for_one_step);
    }
    const auto plug = plugin_estimate(d, spec, opts);
    CHECK(std::isfinite(plug.psi_hat));
    CHECK(std::isnan(plug.se));
  }
}

TEST_CASE("covariate-free data: conditional and marginal one-step routes agree") {
  const auto d = simulate_scenario({2, 1200, 41, 0}).without_covariates();
  const std::vector<double> deltas{-10, -2, 0, 3, 10};
  for (auto w : {CorrectionWeight::odds, CorrectionWeight::literal}) {
    CrossFitOptions opts;
    opts.weight = w;
    opts.keep_eif = true;
    const auto cond = onestep_crossfit_tilt(d, deltas, opts);
    const auto marg = onestep_marginal_tilt(d, deltas, opts);
    for (std::size_t t = 0; t < deltas.size(); ++t) {
      CHECK(std::abs(cond[t].psi_hat - marg[t].psi_hat) <= 1e-10);
      CHECK(std::abs(cond[t].se - marg[t].se) <= 1e-10);
      for (std::size_t i = 0; i < d.size(); ++i) CHECK(std::abs(cond[t].eif_values[i] - marg[t].eif_values[i]) <= 1e-10);
    }
  }
}

TEST_CASE("estimation errors") {
  const auto d = simulate_scenario({1, 300, 1, 0});
  CrossFitOptions opts;
  opts.folds = 1;
  CHECK_THROWS_AS(onestep_crossfit(d, ExponentialTilt{0.0}, opts), Error);
  opts.folds = 5;
  opts.ci_level = 1.5;
  CHECK_THROWS_AS(onestep_crossfit(d, ExponentialTilt{0.0}, opts), Error);
  opts.ci_level = 0.95;
  CHECK_THROWS_AS(onestep_crossfit(d, ExponentialTilt{std::nan("")}, opts), Error);
}
