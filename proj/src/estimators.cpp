#include "tiltdid/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include <boost/math/distributions/normal.hpp>

#include "tiltdid/error.hpp"

namespace tiltdid {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::shared_ptr<const DoseGrid> grid_or_default(const CrossFitOptions& options) {
  return options.grid ? options.grid : std::make_shared<const DoseGrid>();
}

FoldOutput combine_fold(const PanelDataset& data, std::span<const RowIndex> rows,
                        const NuisanceTable& table, const UnitTerms& terms) {
  FoldOutput out;
  double sum_integrated = 0.0, sum_treated_correction = 0.0;
  double sum_trend = 0.0, sum_untreated_correction = 0.0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (data.treated(rows[r])) {
      ++out.treated;
      sum_integrated += terms.integrated[r];
      sum_treated_correction += terms.correction[r];
      sum_trend += table.untreated_outcome[r];
    } else {
      sum_untreated_correction += terms.correction[r];
    }
  }
  if (out.treated == 0) throw Error(Errc::no_treated_units, "evaluation fold has no treated units");

  const auto n_t = static_cast<double>(out.treated);
  out.plugin1 = sum_integrated / n_t;
  out.plugin2 = sum_trend / n_t;
  out.psi1 = out.plugin1 + sum_treated_correction / n_t;
  out.psi2 = out.plugin2 + sum_untreated_correction / n_t;
  out.psi = out.psi1 - out.psi2;
  out.plugin = out.plugin1 - out.plugin2;

  // 1/p-hat with p-hat computed on this fold.
  const double inv_p = static_cast<double>(rows.size()) / n_t;
  out.eif.resize(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (data.treated(rows[r])) {
      const double phi1 = terms.correction[r] + terms.integrated[r] - out.plugin1;
      const double phi2 = table.untreated_outcome[r] - out.plugin2;
      out.eif[r] = inv_p * (phi1 - phi2);
    } else {
      out.eif[r] = -inv_p * terms.correction[r];
    }
  }
  out.floored_density_points = table.floored_points;
  out.clamped_propensities = table.clamped_propensities;
  return out;
}

// Runs the fold loop and aggregates one EstimateResult per target.
using FoldEvaluator = std::function<std::vector<FoldOutput>(
    std::span<const RowIndex> eval_rows, const NuisanceTable& table, const NuisanceModel& model)>;

std::vector<EstimateResult> crossfit(const PanelDataset& data, const CrossFitOptions& options,
                                     const std::vector<std::string>& labels, const FoldEvaluator& evaluate) {
  if (!(options.ci_level > 0.0 && options.ci_level < 1.0)) {
    throw Error(Errc::invalid_parameter, "confidence level must lie in (0,1)");
  }
  const auto grid = grid_or_default(options);
  const NuisanceFitter fitter = options.fitter ? options.fitter : make_nuisance_fitter(grid, options.learners);
  const auto folds = assign_folds(data, options.folds, options.seed);
  const auto n = data.size();
  const auto n_targets = labels.size();

  std::vector<EstimateResult> results(n_targets);
  std::vector<std::vector<double>> eif(n_targets, std::vector<double>(n, 0.0));
  for (std::size_t t = 0; t < n_targets; ++t) {
    results[t].intervention = labels[t];
    results[t].n = n;
    results[t].ci_level = options.ci_level;
  }

  for (int k = 0; k < folds.k; ++k) {
    const auto train = folds.rows_outside(k);
    const auto eval = folds.rows_in(k);
    const auto model = fitter(data, train);
    const auto table = tabulate_nuisance(data, eval, *model, options.execution);
    const auto outputs = evaluate(eval, table, *model);

    std::vector<std::string> flags;
    if (const auto* fitted = dynamic_cast<const FittedNuisance*>(model.get())) {
      for (const auto& f : fitted->flags()) flags.push_back("fold " + std::to_string(k) + ": " + f);
    }

    for (std::size_t t = 0; t < n_targets; ++t) {
      const auto& fo = outputs[t];
      auto& res = results[t];
      res.per_fold.push_back({k, eval.size(), fo.psi, fo.psi1, fo.psi2});
      const double share = static_cast<double>(eval.size()) / static_cast<double>(n);
      res.psi_hat += share * fo.psi;
      res.psi1_hat += share * fo.psi1;
      res.psi2_hat += share * fo.psi2;
      res.plugin_hat += share * fo.plugin;
      res.diagnostics.floored_density_points += fo.floored_density_points;
      res.diagnostics.clamped_propensities += fo.clamped_propensities;
      res.diagnostics.learner_flags.insert(res.diagnostics.learner_flags.end(), flags.begin(), flags.end());
      // Re-centre at the one-step components of the fold.
      const double shift = static_cast<double>(eval.size()) / static_cast<double>(fo.treated) * (fo.psi - fo.plugin);
      for (std::size_t r = 0; r < eval.size(); ++r) {
        eif[t][eval[r]] = fo.eif[r] - (data.treated(eval[r]) ? shift : 0.0);
      }
    }
  }

  for (std::size_t t = 0; t < n_targets; ++t) {
    auto& res = results[t];
    const auto v = variance_plugin(eif[t], res.psi_hat, options.ci_level);
    res.variance = v.variance;
    res.se = v.se;
    res.ci_low = v.ci_low;
    res.ci_high = v.ci_high;
    if (options.keep_eif) res.eif_values = std::move(eif[t]);
  }
  return results;
}

}  // namespace

double normal_quantile(double p) { return boost::math::quantile(boost::math::normal(), p); }

double plugin_upt(const PanelDataset& data, const DensityCurve& q, std::span<const double> outcome_curve) {
  if (outcome_curve.size() != q.size()) throw Error(Errc::invalid_argument, "outcome curve does not match grid");
  double sum = 0.0;
  std::size_t untreated = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!data.treated(i)) {
      sum += data.dy(i);
      ++untreated;
    }
  }
  if (untreated == 0) throw Error(Errc::no_untreated_units, "plug-in needs untreated units");
  return q.grid().integrate_product(outcome_curve, q.values()) - sum / static_cast<double>(untreated);
}

double plugin_cpt(const PanelDataset& data, const NuisanceModel& fit, const InterventionSpec& spec,
                  Execution exec) {
  const auto rows = all_rows(data);
  const auto table = tabulate_nuisance(data, rows, fit, exec);
  const auto integrals = plugin_integrals(data, rows, table, spec, exec);
  double dose_part = 0.0, trend_part = 0.0;
  std::size_t treated = 0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (!data.treated(rows[r])) continue;
    ++treated;
    dose_part += integrals[r];
    trend_part += table.untreated_outcome[r];
  }
  if (treated == 0) throw Error(Errc::no_treated_units, "plug-in needs treated units");
  return (dose_part - trend_part) / static_cast<double>(treated);
}

FoldOutput onestep_fold(const PanelDataset& data, std::span<const RowIndex> eval_rows,
                        const NuisanceModel& fit, double delta, CorrectionWeight weight, Execution exec) {
  const auto table = tabulate_nuisance(data, eval_rows, fit, exec);
  return combine_fold(data, eval_rows, table, tilt_terms(data, eval_rows, table, delta, weight, exec));
}

FoldOutput onestep_fold_fixed(const PanelDataset& data, std::span<const RowIndex> eval_rows,
                              const NuisanceModel& fit, const DensityCurve& q, CorrectionWeight weight,
                              Execution exec) {
  const auto table = tabulate_nuisance(data, eval_rows, fit, exec);
  return combine_fold(data, eval_rows, table,
                      fixed_density_terms(data, eval_rows, table, q.values(), weight, exec));
}

VarianceEstimate variance_plugin(std::span<const double> eif, double psi, double ci_level) {
  VarianceEstimate v;
  if (eif.empty()) throw Error(Errc::invalid_argument, "variance needs influence values");
  double ss = 0.0;
  for (double phi : eif) ss += phi * phi;
  const auto n = static_cast<double>(eif.size());
  v.variance = ss / n;
  v.se = std::sqrt(v.variance / n);
  const double z = normal_quantile(0.5 + 0.5 * ci_level);
  v.ci_low = psi - z * v.se;
  v.ci_high = psi + z * v.se;
  return v;
}

std::vector<EstimateResult> onestep_crossfit_tilt(const PanelDataset& data, std::span<const double> deltas,
                                                  const CrossFitOptions& options) {
  std::vector<std::string> labels;
  for (double d : deltas) {
    validate(ExponentialTilt{d});
    labels.push_back(describe(ExponentialTilt{d}));
  }
  const std::vector<double> ds(deltas.begin(), deltas.end());
  return crossfit(data, options, labels,
                  [&](std::span<const RowIndex> eval, const NuisanceTable& table, const NuisanceModel&) {
                    std::vector<FoldOutput> outs;
                    outs.reserve(ds.size());
                    for (double d : ds) {
                      outs.push_back(combine_fold(
                          data, eval, table, tilt_terms(data, eval, table, d, options.weight, options.execution)));
                    }
                    return outs;
                  });
}

EstimateResult onestep_parametric(const PanelDataset& data, const DensityCurve& q, const CrossFitOptions& options) {
  CrossFitOptions opts = options;
  if (!opts.grid) {
    opts.grid = q.grid_ptr();
  } else if (opts.grid->size() != q.size()) {
    throw Error(Errc::invalid_argument, "intervention density and estimation grid differ in size");
  }
  std::vector<double> qv(q.values().begin(), q.values().end());
  auto results = crossfit(data, opts, {"parametric"},
                          [&](std::span<const RowIndex> eval, const NuisanceTable& table, const NuisanceModel&) {
                            return std::vector<FoldOutput>{combine_fold(
                                data, eval, table,
                                fixed_density_terms(data, eval, table, qv, opts.weight, opts.execution))};
                          });
  return std::move(results.front());
}

EstimateResult onestep_crossfit(const PanelDataset& data, const InterventionSpec& spec,
                                const CrossFitOptions& options) {
  validate(spec);
  if (const auto* tilt = std::get_if<ExponentialTilt>(&spec)) {
    const double delta = tilt->delta;
    return std::move(onestep_crossfit_tilt(data, std::span<const double>(&delta, 1), options).front());
  }
  if (std::holds_alternative<Parametric>(spec)) {
    auto result = onestep_parametric(data, parametric_density(spec, grid_or_default(options)), options);
    result.intervention = describe(spec);
    return result;
  }
  throw Error(Errc::unsupported_intervention_for_one_step,
              describe(spec) + " depends on the observed dose density and has no one-step estimator; "
                               "use the plug-in path");
}

std::vector<EstimateResult> onestep_marginal_tilt(const PanelDataset& data, std::span<const double> deltas,
                                                  const CrossFitOptions& options) {
  const auto grid = grid_or_default(options);
  const auto folds = assign_folds(data, options.folds, options.seed);
  const auto n = data.size();
  const auto m_count = grid->size();
  const int degree = options.learners.outcome.dose_degree;

  std::vector<EstimateResult> results(deltas.size());
  std::vector<std::vector<double>> eif(deltas.size(), std::vector<double>(n, 0.0));
  for (std::size_t t = 0; t < deltas.size(); ++t) {
    results[t].intervention = describe(ExponentialTilt{deltas[t]});
    results[t].n = n;
    results[t].ci_level = options.ci_level;
  }

  for (int k = 0; k < folds.k; ++k) {
    std::vector<double> doses, dose_dy;
    double untreated_sum = 0.0;
    std::size_t train_size = 0, untreated_train = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (folds.fold_id[i] == k) continue;
      ++train_size;
      if (data.treated(i)) {
        doses.push_back(data.a(i));
        dose_dy.push_back(data.dy(i));
      } else {
        untreated_sum += data.dy(i);
        ++untreated_train;
      }
    }

    // mu_d: least squares of dY on dose among treated training units.
    RowMatrix features(static_cast<Eigen::Index>(doses.size()), degree);
    for (std::size_t r = 0; r < doses.size(); ++r) {
      features(static_cast<Eigen::Index>(r), 0) = doses[r];
      if (degree == 2) features(static_cast<Eigen::Index>(r), 1) = doses[r] * doses[r];
    }
    const Eigen::Map<const Eigen::VectorXd> y(dose_dy.data(), static_cast<Eigen::Index>(dose_dy.size()));
    const Eigen::VectorXd coef = fit_least_squares(features, y, 0.0).col(0);
    auto mu = [&](double d) { return coef[0] + d * coef[1] + (degree == 2 ? d * d * coef[2] : 0.0); };

    const double trend = untreated_sum / static_cast<double>(untreated_train);
    const double p_train = std::clamp(static_cast<double>(doses.size()) / static_cast<double>(train_size),
                                      kPropensityMin, kPropensityMax);
    const double b = options.learners.bandwidth ? *options.learners.bandwidth : auto_bandwidth(doses);

    std::vector<double> density(m_count, 0.0), mu_curve(m_count);
    for (std::size_t m = 0; m < m_count; ++m) {
      double z = 0.0;
      for (double d : doses) z += dose_kernel(d, grid->point(m), b);
      density[m] = z / static_cast<double>(doses.size());
      mu_curve[m] = mu(grid->point(m));
    }
    const std::size_t floored = floor_and_normalize(*grid, density);

    const auto eval = folds.rows_in(k);
    std::size_t n_t = 0;
    for (auto i : eval) n_t += data.treated(i) ? 1 : 0;
    const double inv_p = static_cast<double>(eval.size()) / static_cast<double>(n_t);
    const double w = correction_weight(p_train, options.weight);

    for (std::size_t t = 0; t < deltas.size(); ++t) {
      const auto norm = tilt_normalizer(*grid, density, deltas[t]);
      double integral = 0.0;
      for (std::size_t m = 0; m < m_count; ++m) {
        integral += mu_curve[m] * norm.ratio(grid->point(m)) * density[m] * grid->weight(m);
      }
      double treated_correction = 0.0, untreated_correction = 0.0;
      for (auto i : eval) {
        if (data.treated(i)) {
          treated_correction += norm.ratio(data.a(i)) * (data.dy(i) - integral);
        } else {
          untreated_correction += w * (data.dy(i) - trend);
        }
      }
      const double psi1 = integral + treated_correction / static_cast<double>(n_t);
      const double psi2 = trend + untreated_correction / static_cast<double>(n_t);
      const double psi = psi1 - psi2;
      for (auto i : eval) {
        eif[t][i] = data.treated(i)
                        ? inv_p * ((norm.ratio(data.a(i)) * (data.dy(i) - integral) + integral - psi1) -
                                   (trend - psi2))
                        : -inv_p * w * (data.dy(i) - trend);
      }

      auto& res = results[t];
      res.per_fold.push_back({k, eval.size(), psi, psi1, psi2});
      const double share = static_cast<double>(eval.size()) / static_cast<double>(n);
      res.psi_hat += share * psi;
      res.psi1_hat += share * psi1;
      res.psi2_hat += share * psi2;
      res.plugin_hat += share * (integral - trend);
      res.diagnostics.floored_density_points += floored * n_t;
    }
  }

  for (std::size_t t = 0; t < deltas.size(); ++t) {
    auto& res = results[t];
    const auto v = variance_plugin(eif[t], res.psi_hat, options.ci_level);
    res.variance = v.variance;
    res.se = v.se;
    res.ci_low = v.ci_low;
    res.ci_high = v.ci_high;
    if (options.keep_eif) res.eif_values = std::move(eif[t]);
  }
  return results;
}

EstimateResult plugin_estimate(const PanelDataset& data, const InterventionSpec& spec,
                               const CrossFitOptions& options) {
  validate(spec);
  const auto grid = grid_or_default(options);
  const NuisanceFitter fitter = options.fitter ? options.fitter : make_nuisance_fitter(grid, options.learners);
  const auto rows = all_rows(data);
  const auto model = fitter(data, rows);
  const auto table = tabulate_nuisance(data, rows, *model, options.execution);
  const auto integrals = plugin_integrals(data, rows, table, spec, options.execution);

  EstimateResult res;
  res.intervention = describe(spec);
  res.n = data.size();
  res.ci_level = options.ci_level;
  double dose_part = 0.0, trend_part = 0.0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (!data.treated(rows[r])) continue;
    dose_part += integrals[r];
    trend_part += table.untreated_outcome[r];
  }
  const auto n_t = static_cast<double>(data.treated_count());
  res.psi1_hat = dose_part / n_t;
  res.psi2_hat = trend_part / n_t;
  res.psi_hat = res.psi1_hat - res.psi2_hat;
  res.plugin_hat = res.psi_hat;
  res.se = res.variance = res.ci_low = res.ci_high = kNaN;
  res.per_fold.push_back({0, data.size(), res.psi_hat, res.psi1_hat, res.psi2_hat});
  res.diagnostics.floored_density_points = table.floored_points;
  res.diagnostics.clamped_propensities = table.clamped_propensities;
  if (const auto* fitted = dynamic_cast<const FittedNuisance*>(model.get())) {
    res.diagnostics.learner_flags = fitted->flags();
  }
  res.diagnostics.warnings.push_back(
      "plug-in only: no influence-function standard error for " + res.intervention);
  return res;
}

}  // namespace tiltdid
