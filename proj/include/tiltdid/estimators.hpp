#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tiltdid/data.hpp"
#include "tiltdid/dose_grid.hpp"
#include "tiltdid/interventions.hpp"
#include "tiltdid/kernels.hpp"
#include "tiltdid/nuisance.hpp"

namespace tiltdid {

struct FoldEstimate {
  int fold = 0;
  std::size_t size = 0;
  double psi = 0.0;
  double psi1 = 0.0;
  double psi2 = 0.0;
};

struct EstimateDiagnostics {
  std::size_t clamped_propensities = 0;
  std::size_t floored_density_points = 0;
  std::vector<std::string> learner_flags;
  std::vector<std::string> warnings;
};

struct EstimateResult {
  std::string intervention;
  double psi_hat = 0.0;
  double se = 0.0;
  double variance = 0.0;  // sigma^2, so se = sqrt(variance / n)
  double ci_low = 0.0;
  double ci_high = 0.0;
  double ci_level = 0.95;
  double psi1_hat = 0.0;  // dose-response component
  double psi2_hat = 0.0;  // no-treatment trend component
  double plugin_hat = 0.0;
  std::size_t n = 0;
  std::vector<FoldEstimate> per_fold;
  std::vector<double> eif_values;  // per unit, centred; empty unless retained
  EstimateDiagnostics diagnostics;
};

// One evaluation fold of the one-step estimator.
struct FoldOutput {
  double psi = 0.0, psi1 = 0.0, psi2 = 0.0;
  double plugin = 0.0, plugin1 = 0.0, plugin2 = 0.0;
  std::size_t treated = 0;
  // Influence values per evaluation row, centred at the plug-in components,
  // so mean(eif) + plugin == psi.
  std::vector<double> eif;
  std::size_t floored_density_points = 0;
  std::size_t clamped_propensities = 0;
};

struct CrossFitOptions {
  int folds = 5;
  std::uint64_t seed = 1;
  double ci_level = 0.95;
  CorrectionWeight weight = CorrectionWeight::odds;
  bool keep_eif = false;
  Execution execution = Execution::parallel;
  std::shared_ptr<const DoseGrid> grid;  // null: default grid
  NuisanceLearners learners;
  NuisanceFitter fitter;  // empty: fit `learners` on each training split
};

struct VarianceEstimate {
  double variance = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

double normal_quantile(double p);

// integral of mu_d q(d) dd minus the untreated sample mean of dY.
double plugin_upt(const PanelDataset& data, const DensityCurve& q, std::span<const double> outcome_curve);

// Treated-weighted average of integral mu(d, X_i) q(d|X_i) dd minus the
// treated-weighted average of mu_{A=0}(X_i), over all rows of `data`.
double plugin_cpt(const PanelDataset& data, const NuisanceModel& fit, const InterventionSpec& spec,
                  Execution exec = Execution::parallel);

// Exponential-tilt one-step on `eval_rows`; P(A>0) is estimated on the fold.
FoldOutput onestep_fold(const PanelDataset& data, std::span<const RowIndex> eval_rows,
                        const NuisanceModel& fit, double delta,
                        CorrectionWeight weight = CorrectionWeight::odds,
                        Execution exec = Execution::parallel);

// One-step for a data-independent q.
FoldOutput onestep_fold_fixed(const PanelDataset& data, std::span<const RowIndex> eval_rows,
                              const NuisanceModel& fit, const DensityCurve& q,
                              CorrectionWeight weight = CorrectionWeight::odds,
                              Execution exec = Execution::parallel);

// sigma^2 = mean(eif^2), se = sigma / sqrt(n), Wald interval around psi.
VarianceEstimate variance_plugin(std::span<const double> eif, double psi, double ci_level = 0.95);

// Cross-fitted one-step. Supports the exponential tilt and data-independent
// parametric laws; other families throw UnsupportedInterventionForOneStep.
EstimateResult onestep_crossfit(const PanelDataset& data, const InterventionSpec& spec,
                                const CrossFitOptions& options);

// Tilt estimates for several deltas sharing one set of fold fits.
std::vector<EstimateResult> onestep_crossfit_tilt(const PanelDataset& data, std::span<const double> deltas,
                                                  const CrossFitOptions& options);

EstimateResult onestep_parametric(const PanelDataset& data, const DensityCurve& q,
                                  const CrossFitOptions& options);

// Unconditional parallel-trends route: ignores covariates and estimates the
// marginal nuisances directly (sample means and a kernel density estimate).
// On a covariate-free dataset it matches onestep_crossfit_tilt.
std::vector<EstimateResult> onestep_marginal_tilt(const PanelDataset& data, std::span<const double> deltas,
                                                  const CrossFitOptions& options);

// Full-sample plug-in for any family; no influence-function standard error
// (se and the interval are NaN).
EstimateResult plugin_estimate(const PanelDataset& data, const InterventionSpec& spec,
                               const CrossFitOptions& options);

}  // namespace tiltdid
