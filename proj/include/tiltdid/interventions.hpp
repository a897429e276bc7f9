#pragma once

#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "tiltdid/dose_grid.hpp"

namespace tiltdid {

// q(d|x) proportional to exp(delta d) pi(d|x).
struct ExponentialTilt {
  double delta = 0.0;
};
// q(d|x) proportional to exp(-(d - center)^2 / (2 delta^2)) pi(d|x).
struct GaussianKernel {
  double delta = 1.0;
  double center = 0.5;
};
// q(d|x) proportional to pi(d|x) 1(d > threshold).
struct MinimumDose {
  double threshold = 0.0;
};
// Truncated normal on (0,1] centred at the conditional mean of pi(.|x) plus eta.
struct ParametricShift {
  double eta = 0.0;
  double sigma = 0.15;
};

struct UniformDose {};
struct BetaDose {
  double alpha = 1.0;
  double beta = 1.0;
};
struct TruncNormalDose {
  double mean = 0.5;
  double sd = 0.2;
};
using FixedDistribution = std::variant<UniformDose, BetaDose, TruncNormalDose>;

// Data-independent dose law.
struct Parametric {
  FixedDistribution distribution;
};

using InterventionSpec =
    std::variant<ExponentialTilt, GaussianKernel, MinimumDose, ParametricShift, Parametric>;

void validate(const InterventionSpec& spec);
// True when q is a functional of the observed dose density.
bool depends_on_observed_density(const InterventionSpec& spec);
std::string describe(const InterventionSpec& spec);
std::string describe(const FixedDistribution& dist);
// "uniform", "beta:2,2", "truncnorm:0.5,0.2"
FixedDistribution parse_distribution(const std::string& text);

// Density values on a shared grid.
class DensityCurve {
 public:
  DensityCurve(std::shared_ptr<const DoseGrid> grid, std::vector<double> values);

  // Rescales values so the grid integral is 1.
  static DensityCurve normalized(std::shared_ptr<const DoseGrid> grid, std::vector<double> values);
  static DensityCurve uniform(std::shared_ptr<const DoseGrid> grid);

  const DoseGrid& grid() const noexcept { return *grid_; }
  const std::shared_ptr<const DoseGrid>& grid_ptr() const noexcept { return grid_; }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t m) const { return values_[m]; }
  std::size_t size() const noexcept { return values_.size(); }

  double total_mass() const { return grid_->integrate(values_); }
  double mean() const;
  double at(double d) const { return grid_->interpolate(values_, d); }

 private:
  std::shared_ptr<const DoseGrid> grid_;
  std::vector<double> values_;
};

DensityCurve tilt_density(const DensityCurve& pi, double delta);
DensityCurve gaussian_kernel_density(const DensityCurve& pi, double delta, double center);
DensityCurve minimum_dose_density(const DensityCurve& pi, double threshold);
DensityCurve parametric_shift_density(const DensityCurve& pi, double eta, double sigma);
DensityCurve parametric_density(const FixedDistribution& dist, std::shared_ptr<const DoseGrid> grid);
DensityCurve parametric_density(const InterventionSpec& spec, std::shared_ptr<const DoseGrid> grid);
DensityCurve apply_intervention(const InterventionSpec& spec, const DensityCurve& pi);

double integrate_over_dose(const DoseGrid& grid, std::span<const double> values);

// Normaliser of the tilt: for a density pi on the grid,
// q(d)/pi(d) = exp(delta d - shift) / scaled_mass.
struct TiltNormalizer {
  double delta = 0.0;
  double shift = 0.0;
  double scaled_mass = 1.0;

  double ratio(double d) const;
};

TiltNormalizer tilt_normalizer(const DoseGrid& grid, std::span<const double> pi, double delta);

// Span forms used by the per-unit kernels. `out` may alias nothing in `pi`.
void tilt_into(const DoseGrid& grid, std::span<const double> pi, double delta, std::span<double> out);
void apply_into(const InterventionSpec& spec, const DoseGrid& grid, std::span<const double> pi,
                std::span<double> out);

// Beta(alpha, beta) as cell averages over the grid cells, exact at the cell
// level even when the density is unbounded at 0 or 1.
void beta_cell_density(const DoseGrid& grid, double alpha, double beta, std::span<double> out);

}  // namespace tiltdid
