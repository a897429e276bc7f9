#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>

#include <Eigen/Dense>

#include "tiltdid/data.hpp"

namespace tiltdid {

struct LearnerSpec {
  enum class Kind { ols, ridge, logistic, kernel_smoother };

  Kind kind = Kind::ols;
  double lambda = 0.0;     // ridge penalty on the non-intercept coefficients
  double bandwidth = 0.0;  // kernel smoother
  int dose_degree = 1;     // outcome surface in dose: 1 linear, 2 quadratic

  static LearnerSpec ols() { return {}; }
  static LearnerSpec ridge(double lambda) { return {Kind::ridge, lambda, 0.0, 1}; }
  static LearnerSpec logistic() { return {Kind::logistic, 0.0, 0.0, 1}; }
  static LearnerSpec kernel_smoother(double bandwidth) {
    return {Kind::kernel_smoother, 0.0, bandwidth, 1};
  }

  void validate() const;
  std::string describe() const;
  // "ols", "ridge:0.5", "logistic", "smoother:0.2"
  static LearnerSpec parse(const std::string& text);
};

struct FitReport {
  bool singular_fallback = false;
  bool non_convergence = false;
  int iterations = 0;
};

// Fitted regression function over a feature row (no intercept column).
class Regressor {
 public:
  virtual ~Regressor() = default;
  virtual double predict(CovariateRow features) const = 0;
};

class LinearRegressor final : public Regressor {
 public:
  explicit LinearRegressor(Eigen::VectorXd coef) : coef_(std::move(coef)) {}
  double predict(CovariateRow features) const override {
    return coef_[0] + (features * coef_.tail(coef_.size() - 1)).value();
  }
  double intercept() const { return coef_[0]; }
  // Intercept first.
  const Eigen::VectorXd& coefficients() const noexcept { return coef_; }

 private:
  Eigen::VectorXd coef_;
};

class LogisticRegressor final : public Regressor {
 public:
  explicit LogisticRegressor(Eigen::VectorXd coef) : coef_(std::move(coef)) {}
  // Probability, unclamped.
  double predict(CovariateRow features) const override;
  const Eigen::VectorXd& coefficients() const noexcept { return coef_; }

 private:
  Eigen::VectorXd coef_;
};

// Nadaraya-Watson smoother with an isotropic Gaussian kernel.
class KernelSmoother final : public Regressor {
 public:
  KernelSmoother(RowMatrix features, Eigen::VectorXd targets, double bandwidth);
  double predict(CovariateRow features) const override;

 private:
  RowMatrix features_;
  Eigen::VectorXd targets_;
  double bandwidth_;
};

// Least squares with intercept for one or many target columns. lambda = 0 is
// ols; a rank-deficient ols design retries with lambda = 1e-6 and sets
// report->singular_fallback. Returns (p+1) x T coefficients, intercept row first.
Eigen::MatrixXd fit_least_squares(const RowMatrix& features, const Eigen::MatrixXd& targets,
                                  double lambda, FitReport* report = nullptr);

// Newton-Raphson on the logistic log-likelihood, at most max_iter steps. Stops
// at the last finite iterate and flags non-convergence otherwise.
LogisticRegressor fit_logistic(const RowMatrix& features, std::span<const double> labels,
                               FitReport* report = nullptr, int max_iter = 100);

// Pluggable regression learner: (design rows, targets) -> evaluable predictor.
using RegressorFactory = std::function<std::shared_ptr<const Regressor>(
    const RowMatrix& features, std::span<const double> targets, FitReport* report)>;

RegressorFactory make_regressor_factory(const LearnerSpec& spec);

std::shared_ptr<const Regressor> fit_regressor(const LearnerSpec& spec, const RowMatrix& features,
                                               std::span<const double> targets,
                                               FitReport* report = nullptr);

}  // namespace tiltdid
