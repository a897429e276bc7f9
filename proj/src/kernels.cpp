#include "tiltdid/kernels.hpp"

#include <cmath>
#include <exception>
#include <string>

#include "tiltdid/error.hpp"

namespace tiltdid {

namespace {

bool parallel(Execution exec) { return exec == Execution::parallel; }

void check_dose(double d, RowIndex i) {
  if (!(d > 0.0 && d <= 1.0)) {
    throw Error(Errc::dose_outside_grid, "treated dose outside (0,1] in row " + std::to_string(i + 1),
                i + 1, "a");
  }
}

long long as_signed(std::size_t n) { return static_cast<long long>(n); }

}  // namespace

double correction_weight(double p, CorrectionWeight kind) {
  return kind == CorrectionWeight::odds ? p / (1.0 - p) : (1.0 - p) / p;
}

NuisanceTable tabulate_nuisance(const PanelDataset& data, std::span<const RowIndex> rows,
                                const NuisanceModel& model, Execution exec) {
  NuisanceTable table;
  table.grid = model.grid_ptr();
  table.rows = rows.size();
  table.grid_size = model.grid().size();
  const auto m_count = table.grid_size;
  table.density.assign(rows.size() * m_count, 0.0);
  table.outcome.assign(rows.size() * m_count, 0.0);
  table.outcome_at_dose.assign(rows.size(), 0.0);
  table.untreated_outcome.assign(rows.size(), 0.0);
  table.propensity.assign(rows.size(), 0.0);

  for (auto i : rows) {
    if (data.treated(i)) check_dose(data.a(i), i);
  }

  std::size_t floored = 0, clamped = 0;
#pragma omp parallel for schedule(static) reduction(+ : floored, clamped) if (parallel(exec))
  for (long long r = 0; r < as_signed(rows.size()); ++r) {
    const auto ru = static_cast<std::size_t>(r);
    const auto i = rows[ru];
    const auto x = data.x(i);
    table.untreated_outcome[ru] = model.outcome_untreated(x);
    if (data.treated(i)) {
      std::span<double> pi(table.density.data() + ru * m_count, m_count);
      std::span<double> mu(table.outcome.data() + ru * m_count, m_count);
      floored += model.dose_density(x, pi);
      model.outcome_treated_curve(x, mu);
      table.outcome_at_dose[ru] = model.outcome_treated(data.a(i), x);
    } else {
      const double p = model.treated_probability(x);
      table.propensity[ru] = p;
      if (p <= kPropensityMin || p >= kPropensityMax) ++clamped;
    }
  }
  table.floored_points = floored;
  table.clamped_propensities = clamped;
  return table;
}

UnitTerms tilt_terms(const PanelDataset& data, std::span<const RowIndex> rows,
                     const NuisanceTable& table, double delta, CorrectionWeight weight, Execution exec) {
  const auto& grid = *table.grid;
  UnitTerms terms{std::vector<double>(rows.size(), 0.0), std::vector<double>(rows.size(), 0.0)};

#pragma omp parallel for schedule(static) if (parallel(exec))
  for (long long r = 0; r < as_signed(rows.size()); ++r) {
    const auto ru = static_cast<std::size_t>(r);
    const auto i = rows[ru];
    if (data.treated(i)) {
      const auto pi = table.density_row(ru);
      const auto mu = table.outcome_row(ru);
      const auto norm = tilt_normalizer(grid, pi, delta);
      double integral = 0.0;
      for (std::size_t m = 0; m < grid.size(); ++m) {
        integral += mu[m] * std::exp(delta * grid.point(m) - norm.shift) * pi[m] * grid.weight(m);
      }
      integral /= norm.scaled_mass;
      terms.integrated[ru] = integral;
      terms.correction[ru] = norm.ratio(data.a(i)) * (data.dy(i) - integral);
    } else {
      terms.correction[ru] = correction_weight(table.propensity[ru], weight) *
                             (data.dy(i) - table.untreated_outcome[ru]);
    }
  }
  return terms;
}

UnitTerms fixed_density_terms(const PanelDataset& data, std::span<const RowIndex> rows,
                              const NuisanceTable& table, std::span<const double> q,
                              CorrectionWeight weight, Execution exec) {
  const auto& grid = *table.grid;
  UnitTerms terms{std::vector<double>(rows.size(), 0.0), std::vector<double>(rows.size(), 0.0)};

#pragma omp parallel for schedule(static) if (parallel(exec))
  for (long long r = 0; r < as_signed(rows.size()); ++r) {
    const auto ru = static_cast<std::size_t>(r);
    const auto i = rows[ru];
    if (data.treated(i)) {
      const auto pi = table.density_row(ru);
      const auto mu = table.outcome_row(ru);
      const double d = data.a(i);
      terms.integrated[ru] = grid.integrate_product(mu, q);
      const double ratio = grid.interpolate(q, d) / grid.interpolate(pi, d);
      terms.correction[ru] = ratio * (data.dy(i) - table.outcome_at_dose[ru]);
    } else {
      terms.correction[ru] = correction_weight(table.propensity[ru], weight) *
                             (data.dy(i) - table.untreated_outcome[ru]);
    }
  }
  return terms;
}

std::vector<double> plugin_integrals(const PanelDataset& data, std::span<const RowIndex> rows,
                                     const NuisanceTable& table, const InterventionSpec& spec,
                                     Execution exec) {
  validate(spec);
  const auto& grid = *table.grid;
  std::vector<double> out(rows.size(), 0.0);

  std::exception_ptr failure;
#pragma omp parallel if (parallel(exec))
  {
    std::vector<double> q(grid.size());
#pragma omp for schedule(static)
    for (long long r = 0; r < as_signed(rows.size()); ++r) {
      const auto ru = static_cast<std::size_t>(r);
      if (!data.treated(rows[ru])) continue;
      try {
        apply_into(spec, grid, table.density_row(ru), q);
        out[ru] = grid.integrate_product(table.outcome_row(ru), q);
      } catch (...) {
#pragma omp critical(tiltdid_plugin_failure)
        if (!failure) failure = std::current_exception();
      }
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

namespace reference {

namespace {

DensityCurve observed_density(const NuisanceModel& model, CovariateRow x) {
  std::vector<double> pi(model.grid().size());
  model.dose_density(x, pi);
  return DensityCurve(model.grid_ptr(), std::move(pi));
}

std::vector<double> outcome_curve(const NuisanceModel& model, CovariateRow x) {
  const auto& grid = model.grid();
  std::vector<double> mu(grid.size());
  for (std::size_t m = 0; m < grid.size(); ++m) mu[m] = model.outcome_treated(grid.point(m), x);
  return mu;
}

double integral_of_product(const DoseGrid& grid, const std::vector<double>& f, std::span<const double> g) {
  std::vector<double> prod(f.size());
  for (std::size_t m = 0; m < f.size(); ++m) prod[m] = f[m] * g[m];
  return integrate_over_dose(grid, prod);
}

double untreated_correction(const PanelDataset& data, RowIndex i, const NuisanceModel& model,
                            CorrectionWeight weight) {
  const auto x = data.x(i);
  return correction_weight(model.treated_probability(x), weight) * (data.dy(i) - model.outcome_untreated(x));
}

}  // namespace

UnitTerms tilt_terms(const PanelDataset& data, std::span<const RowIndex> rows,
                     const NuisanceModel& model, double delta, CorrectionWeight weight) {
  const auto& grid = model.grid();
  UnitTerms terms{std::vector<double>(rows.size(), 0.0), std::vector<double>(rows.size(), 0.0)};
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto i = rows[r];
    if (!data.treated(i)) {
      terms.correction[r] = untreated_correction(data, i, model, weight);
      continue;
    }
    check_dose(data.a(i), i);
    const auto x = data.x(i);
    const auto pi = observed_density(model, x);
    const auto q = tilt_density(pi, delta);
    const double integral = integral_of_product(grid, outcome_curve(model, x), q.values());

    std::vector<double> tilted(grid.size());
    for (std::size_t m = 0; m < grid.size(); ++m) tilted[m] = std::exp(delta * grid.point(m)) * pi[m];
    const double ratio = std::exp(delta * data.a(i)) / integrate_over_dose(grid, tilted);

    terms.integrated[r] = integral;
    terms.correction[r] = ratio * (data.dy(i) - integral);
  }
  return terms;
}

UnitTerms fixed_density_terms(const PanelDataset& data, std::span<const RowIndex> rows,
                              const NuisanceModel& model, const DensityCurve& q,
                              CorrectionWeight weight) {
  const auto& grid = model.grid();
  UnitTerms terms{std::vector<double>(rows.size(), 0.0), std::vector<double>(rows.size(), 0.0)};
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto i = rows[r];
    if (!data.treated(i)) {
      terms.correction[r] = untreated_correction(data, i, model, weight);
      continue;
    }
    check_dose(data.a(i), i);
    const auto x = data.x(i);
    const auto pi = observed_density(model, x);
    const double d = data.a(i);
    terms.integrated[r] = integral_of_product(grid, outcome_curve(model, x), q.values());
    terms.correction[r] = q.at(d) / pi.at(d) * (data.dy(i) - model.outcome_treated(d, x));
  }
  return terms;
}

std::vector<double> plugin_integrals(const PanelDataset& data, std::span<const RowIndex> rows,
                                     const NuisanceModel& model, const InterventionSpec& spec) {
  std::vector<double> out(rows.size(), 0.0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto i = rows[r];
    if (!data.treated(i)) continue;
    const auto x = data.x(i);
    const auto q = apply_intervention(spec, observed_density(model, x));
    out[r] = integral_of_product(model.grid(), outcome_curve(model, x), q.values());
  }
  return out;
}

}  // namespace reference

}  // namespace tiltdid
