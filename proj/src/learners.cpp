#include "tiltdid/learners.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tiltdid/error.hpp"

namespace tiltdid {

namespace {

Eigen::MatrixXd with_intercept(const RowMatrix& features) {
  Eigen::MatrixXd design(features.rows(), features.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(features.cols()) = features;
  return design;
}

Eigen::MatrixXd ridge_solve(const Eigen::MatrixXd& design, const Eigen::MatrixXd& targets,
                            double lambda) {
  Eigen::MatrixXd gram = design.transpose() * design;
  for (Eigen::Index j = 1; j < gram.cols(); ++j) gram(j, j) += lambda;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  return ldlt.solve(design.transpose() * targets);
}

double sigmoid(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

}  // namespace

void LearnerSpec::validate() const {
  if (kind == Kind::ridge && !(lambda >= 0.0)) {
    throw Error(Errc::invalid_parameter, "ridge penalty must be >= 0");
  }
  if (kind == Kind::kernel_smoother && !(bandwidth > 0.0)) {
    throw Error(Errc::invalid_parameter, "kernel smoother bandwidth must be > 0");
  }
  if (dose_degree != 1 && dose_degree != 2) {
    throw Error(Errc::invalid_parameter, "dose degree must be 1 or 2");
  }
}

std::string LearnerSpec::describe() const {
  std::string base;
  switch (kind) {
    case Kind::ols: base = "ols"; break;
    case Kind::ridge: base = "ridge:" + std::to_string(lambda); break;
    case Kind::logistic: base = "logistic"; break;
    case Kind::kernel_smoother: base = "smoother:" + std::to_string(bandwidth); break;
  }
  if (dose_degree == 2) base += "+quadratic";
  return base;
}

LearnerSpec LearnerSpec::parse(const std::string& text) {
  const auto colon = text.find(':');
  const std::string name = text.substr(0, colon);
  auto number = [&]() {
    if (colon == std::string::npos) {
      throw Error(Errc::invalid_parameter, "learner '" + name + "' needs a parameter");
    }
    try {
      return std::stod(text.substr(colon + 1));
    } catch (const std::exception&) {
      throw Error(Errc::invalid_parameter, "bad learner parameter in '" + text + "'");
    }
  };
  LearnerSpec spec;
  if (name == "ols") {
    spec = ols();
  } else if (name == "ridge") {
    spec = ridge(number());
  } else if (name == "logistic") {
    spec = logistic();
  } else if (name == "smoother") {
    spec = kernel_smoother(number());
  } else {
    throw Error(Errc::invalid_parameter, "unknown learner '" + text + "'");
  }
  spec.validate();
  return spec;
}

double LogisticRegressor::predict(CovariateRow features) const {
  return sigmoid(coef_[0] + (features * coef_.tail(coef_.size() - 1)).value());
}

KernelSmoother::KernelSmoother(RowMatrix features, Eigen::VectorXd targets, double bandwidth)
    : features_(std::move(features)), targets_(std::move(targets)), bandwidth_(bandwidth) {
  if (!(bandwidth_ > 0.0)) throw Error(Errc::bandwidth_non_positive, "smoother bandwidth must be > 0");
  if (targets_.size() == 0) throw Error(Errc::insufficient_rows, "kernel smoother needs data");
}

double KernelSmoother::predict(CovariateRow features) const {
  const Eigen::VectorXd sq = (features_.rowwise() - features).rowwise().squaredNorm();
  const double nearest = sq.minCoeff();
  const double scale = 2.0 * bandwidth_ * bandwidth_;
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < sq.size(); ++i) {
    const double w = std::exp(-(sq[i] - nearest) / scale);
    num += w * targets_[i];
    den += w;
  }
  return num / den;
}

Eigen::MatrixXd fit_least_squares(const RowMatrix& features, const Eigen::MatrixXd& targets,
                                  double lambda, FitReport* report) {
  if (features.rows() < features.cols() + 1) {
    throw Error(Errc::insufficient_rows, "least squares needs at least p + 1 rows, have " +
                                             std::to_string(features.rows()));
  }
  const Eigen::MatrixXd design = with_intercept(features);
  if (lambda > 0.0) return ridge_solve(design, targets, lambda);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() == design.cols()) return qr.solve(targets);
  if (report) report->singular_fallback = true;
  return ridge_solve(design, targets, 1e-6);
}

LogisticRegressor fit_logistic(const RowMatrix& features, std::span<const double> labels,
                               FitReport* report, int max_iter) {
  const Eigen::MatrixXd design = with_intercept(features);
  const Eigen::Map<const Eigen::VectorXd> y(labels.data(), static_cast<Eigen::Index>(labels.size()));
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(design.cols());
  const double ybar = std::clamp(y.mean(), 1e-6, 1.0 - 1e-6);
  beta[0] = std::log(ybar / (1.0 - ybar));

  bool converged = false;
  int iter = 0;
  for (; iter < max_iter; ++iter) {
    const Eigen::VectorXd eta = design * beta;
    Eigen::VectorXd prob(eta.size()), weight(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      prob[i] = sigmoid(eta[i]);
      weight[i] = prob[i] * (1.0 - prob[i]);
    }
    const Eigen::VectorXd grad = design.transpose() * (y - prob);
    const Eigen::MatrixXd hess = design.transpose() * weight.asDiagonal() * design;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
    if (ldlt.info() != Eigen::Success) break;
    const Eigen::VectorXd step = ldlt.solve(grad);
    if (!step.allFinite()) break;
    beta += step;
    if (step.cwiseAbs().maxCoeff() < 1e-10) {
      converged = true;
      ++iter;
      break;
    }
  }
  if (report) {
    report->iterations = iter;
    report->non_convergence = !converged;
  }
  return LogisticRegressor(std::move(beta));
}

RegressorFactory make_regressor_factory(const LearnerSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case LearnerSpec::Kind::ols:
    case LearnerSpec::Kind::ridge: {
      const double lambda = spec.kind == LearnerSpec::Kind::ridge ? spec.lambda : 0.0;
      return [lambda](const RowMatrix& f, std::span<const double> t, FitReport* report) {
        const Eigen::Map<const Eigen::VectorXd> y(t.data(), static_cast<Eigen::Index>(t.size()));
        Eigen::MatrixXd coef = fit_least_squares(f, y, lambda, report);
        return std::make_shared<const LinearRegressor>(coef.col(0));
      };
    }
    case LearnerSpec::Kind::logistic:
      return [](const RowMatrix& f, std::span<const double> t, FitReport* report) {
        return std::make_shared<const LogisticRegressor>(fit_logistic(f, t, report));
      };
    case LearnerSpec::Kind::kernel_smoother: {
      const double h = spec.bandwidth;
      return [h](const RowMatrix& f, std::span<const double> t, FitReport*) {
        const Eigen::Map<const Eigen::VectorXd> y(t.data(), static_cast<Eigen::Index>(t.size()));
        return std::make_shared<const KernelSmoother>(f, y, h);
      };
    }
  }
  throw Error(Errc::invalid_parameter, "unknown learner kind");
}

std::shared_ptr<const Regressor> fit_regressor(const LearnerSpec& spec, const RowMatrix& features,
                                               std::span<const double> targets, FitReport* report) {
  return make_regressor_factory(spec)(features, targets, report);
}

}  // namespace tiltdid
