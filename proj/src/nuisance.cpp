#include "tiltdid/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tiltdid/error.hpp"

namespace tiltdid {

namespace {

void require_group(const PanelDataset& data, std::span<const RowIndex> rows, bool treated,
                   const char* what) {
  for (auto i : rows) {
    if (data.treated(i) != treated) {
      throw Error(Errc::invalid_argument, std::string(what) + " expects only " +
                                              (treated ? "treated" : "untreated") + " rows");
    }
  }
}

RowMatrix gather_covariates(const PanelDataset& data, std::span<const RowIndex> rows) {
  RowMatrix x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(data.num_covariates()));
  for (std::size_t r = 0; r < rows.size(); ++r) x.row(static_cast<Eigen::Index>(r)) = data.x(rows[r]);
  return x;
}

std::vector<double> gather_dy(const PanelDataset& data, std::span<const RowIndex> rows) {
  std::vector<double> y(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) y[r] = data.dy(rows[r]);
  return y;
}

}  // namespace

std::size_t floor_and_normalize(const DoseGrid& grid, std::span<double> values, double floor) {
  double positive_mass = 0.0;
  for (std::size_t m = 0; m < values.size(); ++m) {
    if (values[m] > 0.0) positive_mass += values[m] * grid.weight(m);
  }
  if (!(positive_mass > 0.0) || !std::isfinite(positive_mass)) {
    std::fill(values.begin(), values.end(), 1.0);
    return values.size();
  }
  // Find the scale s with sum_m w_m max(v_m / s, floor) = 1. Starting from the
  // floor-free scale, each update can only grow the floored set, so this
  // terminates after at most M passes.
  double scale = positive_mass;
  for (std::size_t pass = 0; pass <= values.size(); ++pass) {
    double kept = 0.0, floored_weight = 0.0;
    for (std::size_t m = 0; m < values.size(); ++m) {
      if (values[m] / scale > floor) {
        kept += values[m] * grid.weight(m);
      } else {
        floored_weight += grid.weight(m);
      }
    }
    const double next = kept / (1.0 - floor * floored_weight);
    if (next == scale) break;
    scale = next;
  }
  std::size_t floored = 0;
  for (auto& v : values) {
    const double scaled = v / scale;
    if (scaled > floor) {
      v = scaled;
    } else {
      v = floor;
      ++floored;
    }
  }
  return floored;
}

void NuisanceModel::outcome_treated_curve(CovariateRow x, std::span<double> out) const {
  const auto& g = grid();
  for (std::size_t m = 0; m < g.size(); ++m) out[m] = outcome_treated(g.point(m), x);
}

OutcomeSurface::OutcomeSurface(std::shared_ptr<const Regressor> regressor, int dose_degree)
    : regressor_(std::move(regressor)), dose_degree_(dose_degree) {}

double OutcomeSurface::operator()(double dose, CovariateRow x) const {
  Eigen::RowVectorXd features(x.size() + dose_degree_);
  features[0] = dose;
  if (dose_degree_ == 2) features[1] = dose * dose;
  features.tail(x.size()) = x;
  return regressor_->predict(features);
}

void OutcomeSurface::curve(const DoseGrid& grid, CovariateRow x, std::span<double> out) const {
  Eigen::RowVectorXd features(x.size() + dose_degree_);
  features.tail(x.size()) = x;
  for (std::size_t m = 0; m < grid.size(); ++m) {
    const double d = grid.point(m);
    features[0] = d;
    if (dose_degree_ == 2) features[1] = d * d;
    out[m] = regressor_->predict(features);
  }
}

double PropensityModel::operator()(CovariateRow x) const {
  return std::clamp(regressor_->predict(x), kPropensityMin, kPropensityMax);
}

double gaussian_kernel(double u) { return std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi); }

double dose_kernel(double dose, double d, double bandwidth) {
  // Mirror images of the dose at 0 and 1 return the mass the kernel would
  // otherwise leak outside the support.
  const double direct = gaussian_kernel((dose - d) / bandwidth);
  const double low = gaussian_kernel((-dose - d) / bandwidth);
  const double high = gaussian_kernel((2.0 - dose - d) / bandwidth);
  return (direct + low + high) / bandwidth;
}

double auto_bandwidth(std::span<const double> doses) {
  const auto n = static_cast<double>(doses.size());
  if (doses.size() < 2) return kMaxBandwidth;
  double mean = 0.0;
  for (double d : doses) mean += d;
  mean /= n;
  double ss = 0.0;
  for (double d : doses) ss += (d - mean) * (d - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  return std::clamp(1.06 * sd * std::pow(n, -0.2), kMinBandwidth, kMaxBandwidth);
}

std::size_t DoseDensityModel::evaluate(CovariateRow x, std::span<double> out) const {
  const auto m_count = static_cast<Eigen::Index>(grid_->size());
  for (Eigen::Index m = 0; m < m_count; ++m) {
    double v = coef_(0, m);
    for (Eigen::Index j = 0; j < x.size(); ++j) v += x[j] * coef_(j + 1, m);
    out[static_cast<std::size_t>(m)] = v;
  }
  return floor_and_normalize(*grid_, out);
}

OutcomeSurface fit_outcome_treated(const PanelDataset& data, std::span<const RowIndex> rows,
                                   const LearnerSpec& learner, FitReport* report) {
  learner.validate();
  require_group(data, rows, true, "fit_outcome_treated");
  const auto p = data.num_covariates();
  const auto width = p + static_cast<std::size_t>(learner.dose_degree);
  if (rows.size() < width + 1 || rows.size() < p + 2) {
    throw Error(Errc::insufficient_rows, "outcome regression among treated needs at least " +
                                             std::to_string(std::max(width + 1, p + 2)) +
                                             " rows, have " + std::to_string(rows.size()));
  }
  RowMatrix features(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto ri = static_cast<Eigen::Index>(r);
    const double d = data.a(rows[r]);
    features(ri, 0) = d;
    if (learner.dose_degree == 2) features(ri, 1) = d * d;
    features.row(ri).tail(static_cast<Eigen::Index>(p)) = data.x(rows[r]);
  }
  const auto y = gather_dy(data, rows);
  return OutcomeSurface(fit_regressor(learner, features, y, report), learner.dose_degree);
}

std::shared_ptr<const Regressor> fit_outcome_untreated(const PanelDataset& data,
                                                       std::span<const RowIndex> rows,
                                                       const LearnerSpec& learner, FitReport* report) {
  learner.validate();
  require_group(data, rows, false, "fit_outcome_untreated");
  if (rows.size() < data.num_covariates() + 1) {
    throw Error(Errc::insufficient_rows, "outcome regression among untreated needs at least " +
                                             std::to_string(data.num_covariates() + 1) + " rows");
  }
  return fit_regressor(learner, gather_covariates(data, rows), gather_dy(data, rows), report);
}

PropensityModel fit_binary_propensity(const PanelDataset& data, std::span<const RowIndex> rows,
                                      const LearnerSpec& learner, FitReport* report) {
  learner.validate();
  std::vector<double> labels(rows.size());
  std::size_t treated = 0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    labels[r] = data.treated(rows[r]) ? 1.0 : 0.0;
    treated += data.treated(rows[r]) ? 1 : 0;
  }
  if (treated == 0 || treated == rows.size()) {
    throw Error(Errc::all_treated_or_all_untreated,
                "binary propensity needs treated and untreated rows");
  }
  return PropensityModel(fit_regressor(learner, gather_covariates(data, rows), labels, report));
}

DoseDensityModel fit_dose_density(const PanelDataset& data, std::span<const RowIndex> rows,
                                  std::shared_ptr<const DoseGrid> grid, std::optional<double> bandwidth,
                                  FitReport* report) {
  require_group(data, rows, true, "fit_dose_density");
  if (bandwidth && !(*bandwidth > 0.0)) {
    throw Error(Errc::bandwidth_non_positive, "dose density bandwidth must be > 0");
  }
  if (rows.size() < data.num_covariates() + 1) {
    throw Error(Errc::insufficient_rows, "dose density regression needs at least " +
                                             std::to_string(data.num_covariates() + 1) + " treated rows");
  }
  std::vector<double> doses(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) doses[r] = data.a(rows[r]);
  const double b = bandwidth ? *bandwidth : auto_bandwidth(doses);

  const auto m_count = grid->size();
  Eigen::MatrixXd pseudo(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m_count));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t m = 0; m < m_count; ++m) {
      pseudo(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(m)) =
          dose_kernel(doses[r], grid->point(m), b);
    }
  }
  Eigen::MatrixXd coef = fit_least_squares(gather_covariates(data, rows), pseudo, 0.0, report);
  return DoseDensityModel(std::move(grid), std::move(coef), b);
}

FittedNuisance::FittedNuisance(std::shared_ptr<const DoseGrid> grid, OutcomeSurface outcome,
                               std::shared_ptr<const Regressor> untreated, PropensityModel propensity,
                               DoseDensityModel density, std::vector<std::string> flags)
    : grid_(std::move(grid)), outcome_(std::move(outcome)), untreated_(std::move(untreated)),
      propensity_(std::move(propensity)), density_(std::move(density)), flags_(std::move(flags)) {}

void FittedNuisance::outcome_treated_curve(CovariateRow x, std::span<double> out) const {
  outcome_.curve(*grid_, x, out);
}

std::shared_ptr<const FittedNuisance> fit_nuisance(const PanelDataset& data,
                                                   std::span<const RowIndex> train_rows,
                                                   std::shared_ptr<const DoseGrid> grid,
                                                   const NuisanceLearners& learners) {
  std::vector<RowIndex> treated, untreated;
  for (auto i : train_rows) (data.treated(i) ? treated : untreated).push_back(i);

  std::vector<std::string> flags;
  auto note = [&](const char* name, const FitReport& r) {
    if (r.singular_fallback) flags.push_back(std::string(name) + ": singular design, ridge 1e-6 fallback");
    if (r.non_convergence) flags.push_back(std::string(name) + ": no convergence after " +
                                           std::to_string(r.iterations) + " Newton steps");
  };

  FitReport r_outcome, r_untreated, r_propensity, r_density;
  auto outcome = fit_outcome_treated(data, treated, learners.outcome, &r_outcome);
  auto base = fit_outcome_untreated(data, untreated, learners.untreated, &r_untreated);
  auto propensity = fit_binary_propensity(data, train_rows, learners.propensity, &r_propensity);
  auto density = fit_dose_density(data, treated, grid, learners.bandwidth, &r_density);
  note("outcome_treated", r_outcome);
  note("outcome_untreated", r_untreated);
  note("binary_propensity", r_propensity);
  note("dose_density", r_density);

  return std::make_shared<const FittedNuisance>(std::move(grid), std::move(outcome), std::move(base),
                                                std::move(propensity), std::move(density), std::move(flags));
}

NuisanceFitter make_nuisance_fitter(std::shared_ptr<const DoseGrid> grid, NuisanceLearners learners) {
  return [grid = std::move(grid), learners = std::move(learners)](
             const PanelDataset& data, std::span<const RowIndex> rows) -> std::shared_ptr<const NuisanceModel> {
    return fit_nuisance(data, rows, grid, learners);
  };
}

}  // namespace tiltdid
