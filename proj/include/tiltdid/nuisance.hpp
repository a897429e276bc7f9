#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tiltdid/data.hpp"
#include "tiltdid/dose_grid.hpp"
#include "tiltdid/learners.hpp"

namespace tiltdid {

inline constexpr double kDensityFloor = 1e-3;
inline constexpr double kPropensityMin = 0.01;
inline constexpr double kPropensityMax = 0.99;
inline constexpr double kMinBandwidth = 0.02;
inline constexpr double kMaxBandwidth = 0.25;

// Raises values below `floor` and rescales the rest so that the grid integral
// is 1 and every value stays >= floor. Non-positive input collapses to the
// uniform density. Returns the number of floored points.
std::size_t floor_and_normalize(const DoseGrid& grid, std::span<double> values,
                                double floor = kDensityFloor);

// Evaluable nuisance functions shared by every estimator. Implementations
// must be immutable after construction and safe to query concurrently.
class NuisanceModel {
 public:
  virtual ~NuisanceModel() = default;

  virtual const std::shared_ptr<const DoseGrid>& grid_ptr() const = 0;
  const DoseGrid& grid() const { return *grid_ptr(); }
  // mu_d(x) = E[dY | X = x, D = d, A > 0]
  virtual double outcome_treated(double dose, CovariateRow x) const = 0;
  virtual void outcome_treated_curve(CovariateRow x, std::span<double> out) const;
  // mu_{A=0}(x) = E[dY | X = x, A = 0]
  virtual double outcome_untreated(CovariateRow x) const = 0;
  // P(A > 0 | X = x), clamped to [kPropensityMin, kPropensityMax].
  virtual double treated_probability(CovariateRow x) const = 0;
  // pi_D(.|x) on the grid: floored and normalised. Returns floored point count.
  virtual std::size_t dose_density(CovariateRow x, std::span<double> out) const = 0;
};

// mu_d(x) as a regression on (d, [d^2,] x).
class OutcomeSurface {
 public:
  OutcomeSurface(std::shared_ptr<const Regressor> regressor, int dose_degree);
  double operator()(double dose, CovariateRow x) const;
  void curve(const DoseGrid& grid, CovariateRow x, std::span<double> out) const;

 private:
  std::shared_ptr<const Regressor> regressor_;
  int dose_degree_;
};

class PropensityModel {
 public:
  explicit PropensityModel(std::shared_ptr<const Regressor> regressor) : regressor_(std::move(regressor)) {}
  double operator()(CovariateRow x) const;

 private:
  std::shared_ptr<const Regressor> regressor_;
};

// Kernel-transformed regression: for each grid dose d_m the pseudo-outcome
// dose_kernel(D, d_m, b) is regressed on x by least squares, then floored and
// renormalised on the grid.
class DoseDensityModel {
 public:
  DoseDensityModel(std::shared_ptr<const DoseGrid> grid, Eigen::MatrixXd coefficients, double bandwidth)
      : grid_(std::move(grid)), coef_(std::move(coefficients)), bandwidth_(bandwidth) {}

  std::size_t evaluate(CovariateRow x, std::span<double> out) const;
  double bandwidth() const noexcept { return bandwidth_; }
  const DoseGrid& grid() const noexcept { return *grid_; }
  // (p+1) x M, intercept row first.
  const Eigen::MatrixXd& coefficients() const noexcept { return coef_; }

 private:
  std::shared_ptr<const DoseGrid> grid_;
  Eigen::MatrixXd coef_;
  double bandwidth_;
};

// 1.06 sd(D) n^(-1/5), clipped to [kMinBandwidth, kMaxBandwidth].
double auto_bandwidth(std::span<const double> doses);

double gaussian_kernel(double u);

// Gaussian kernel K_b(dose - d) reflected at both ends of (0, 1].
double dose_kernel(double dose, double d, double bandwidth);

// The fit_* functions read only `rows`; rows of the wrong treatment group are
// a precondition violation (Errc::invalid_argument).
OutcomeSurface fit_outcome_treated(const PanelDataset& data, std::span<const RowIndex> rows,
                                   const LearnerSpec& learner, FitReport* report = nullptr);
std::shared_ptr<const Regressor> fit_outcome_untreated(const PanelDataset& data,
                                                       std::span<const RowIndex> rows,
                                                       const LearnerSpec& learner,
                                                       FitReport* report = nullptr);
PropensityModel fit_binary_propensity(const PanelDataset& data, std::span<const RowIndex> rows,
                                      const LearnerSpec& learner, FitReport* report = nullptr);
DoseDensityModel fit_dose_density(const PanelDataset& data, std::span<const RowIndex> rows,
                                  std::shared_ptr<const DoseGrid> grid,
                                  std::optional<double> bandwidth = std::nullopt,
                                  FitReport* report = nullptr);

struct NuisanceLearners {
  LearnerSpec outcome = LearnerSpec::ols();
  LearnerSpec untreated = LearnerSpec::ols();
  LearnerSpec propensity = LearnerSpec::logistic();
  std::optional<double> bandwidth;  // empty: auto
};

class FittedNuisance final : public NuisanceModel {
 public:
  FittedNuisance(std::shared_ptr<const DoseGrid> grid, OutcomeSurface outcome,
                 std::shared_ptr<const Regressor> untreated, PropensityModel propensity,
                 DoseDensityModel density, std::vector<std::string> flags);

  const std::shared_ptr<const DoseGrid>& grid_ptr() const override { return grid_; }
  double outcome_treated(double dose, CovariateRow x) const override { return outcome_(dose, x); }
  void outcome_treated_curve(CovariateRow x, std::span<double> out) const override;
  double outcome_untreated(CovariateRow x) const override { return untreated_->predict(x); }
  double treated_probability(CovariateRow x) const override { return propensity_(x); }
  std::size_t dose_density(CovariateRow x, std::span<double> out) const override {
    return density_.evaluate(x, out);
  }

  const DoseDensityModel& density_model() const noexcept { return density_; }
  // Learner warnings such as singular-design fallbacks.
  const std::vector<std::string>& flags() const noexcept { return flags_; }

 private:
  std::shared_ptr<const DoseGrid> grid_;
  OutcomeSurface outcome_;
  std::shared_ptr<const Regressor> untreated_;
  PropensityModel propensity_;
  DoseDensityModel density_;
  std::vector<std::string> flags_;
};

// Fits all four nuisance functions on `train_rows`, splitting them by
// treatment status internally.
std::shared_ptr<const FittedNuisance> fit_nuisance(const PanelDataset& data,
                                                   std::span<const RowIndex> train_rows,
                                                   std::shared_ptr<const DoseGrid> grid,
                                                   const NuisanceLearners& learners);

using NuisanceFitter = std::function<std::shared_ptr<const NuisanceModel>(
    const PanelDataset& data, std::span<const RowIndex> train_rows)>;

NuisanceFitter make_nuisance_fitter(std::shared_ptr<const DoseGrid> grid, NuisanceLearners learners);

}  // namespace tiltdid
