#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "tiltdid/data.hpp"
#include "tiltdid/interventions.hpp"
#include "tiltdid/nuisance.hpp"

namespace tiltdid {

enum class Execution { serial, parallel };

// Weight on the untreated residual in the debiased no-treatment trend.
// odds: pi/(1-pi), literal: (1-pi)/pi as printed in the original display.
enum class CorrectionWeight { odds, literal };

double correction_weight(double treated_probability, CorrectionWeight kind);

// Nuisance values for the evaluation rows of one fold, aligned with `rows`.
// Dose curves are filled for treated rows only.
struct NuisanceTable {
  std::shared_ptr<const DoseGrid> grid;
  std::size_t rows = 0;
  std::size_t grid_size = 0;
  std::vector<double> density;            // rows x M
  std::vector<double> outcome;            // rows x M
  std::vector<double> outcome_at_dose;    // mu(D_i, X_i)
  std::vector<double> untreated_outcome;  // mu_{A=0}(X_i)
  std::vector<double> propensity;         // P(A>0 | X_i), untreated rows only
  std::size_t floored_points = 0;
  std::size_t clamped_propensities = 0;

  std::span<const double> density_row(std::size_t r) const {
    return {density.data() + r * grid_size, grid_size};
  }
  std::span<const double> outcome_row(std::size_t r) const {
    return {outcome.data() + r * grid_size, grid_size};
  }
};

NuisanceTable tabulate_nuisance(const PanelDataset& data, std::span<const RowIndex> rows,
                                const NuisanceModel& model, Execution exec = Execution::parallel);

// Per-unit pieces of the one-step estimator for one fold.
//   integrated[r]: treated, integral of mu(b, X) q(b|X) db
//   correction[r]: treated, q(D|X)/pi(D|X) times the outcome residual;
//                  untreated, w(X) (dY - mu_{A=0}(X))
struct UnitTerms {
  std::vector<double> integrated;
  std::vector<double> correction;
};

// Exponential tilt; the residual is dY - integral of mu q, and the density
// ratio is exp(delta D) / integral exp(delta b) pi(b|X) db.
UnitTerms tilt_terms(const PanelDataset& data, std::span<const RowIndex> rows,
                     const NuisanceTable& table, double delta, CorrectionWeight weight,
                     Execution exec = Execution::parallel);

// Data-independent q; the residual is dY - mu(D, X) and pi(D|X), q(D) are
// interpolated from the grid.
UnitTerms fixed_density_terms(const PanelDataset& data, std::span<const RowIndex> rows,
                              const NuisanceTable& table, std::span<const double> q,
                              CorrectionWeight weight, Execution exec = Execution::parallel);

// Plug-in integrals for any intervention family (treated rows; 0 elsewhere).
std::vector<double> plugin_integrals(const PanelDataset& data, std::span<const RowIndex> rows,
                                     const NuisanceTable& table, const InterventionSpec& spec,
                                     Execution exec = Execution::parallel);

// Serial reference implementations written directly against the
// NuisanceModel and DensityCurve interfaces. Kept for testing the kernels.
namespace reference {

UnitTerms tilt_terms(const PanelDataset& data, std::span<const RowIndex> rows,
                     const NuisanceModel& model, double delta, CorrectionWeight weight);
UnitTerms fixed_density_terms(const PanelDataset& data, std::span<const RowIndex> rows,
                              const NuisanceModel& model, const DensityCurve& q,
                              CorrectionWeight weight);
std::vector<double> plugin_integrals(const PanelDataset& data, std::span<const RowIndex> rows,
                                     const NuisanceModel& model, const InterventionSpec& spec);

}  // namespace reference

}  // namespace tiltdid
