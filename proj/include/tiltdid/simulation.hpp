#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "tiltdid/data.hpp"
#include "tiltdid/dose_grid.hpp"
#include "tiltdid/estimators.hpp"
#include "tiltdid/interventions.hpp"
#include "tiltdid/nuisance.hpp"

namespace tiltdid {

inline constexpr std::size_t kScenarioCovariates = 10;
inline constexpr std::size_t kMinScenarioRows = 100;
inline constexpr int kMinReplicates = 50;
inline constexpr std::size_t kMinOracleDraws = 100000;

// Coefficients of the two simulation designs.
//   P(A>0|X) = 0.7 + sum_j (-0.12 + 0.02 j) X_j
//   D | X, A>0 ~ Beta(exp(X lambda1), exp(X lambda2))
//   dY | A, X ~ N(1(A=0) X gamma1 + 1(A>0)(0.5 D + X gamma2), 1)
struct ScenarioParams {
  using Vec = std::array<double, kScenarioCovariates>;

  int scenario = 1;
  Vec lambda1{}, lambda2{}, gamma1{}, gamma2{}, propensity{};

  static ScenarioParams make(int scenario);

  double treated_probability(CovariateRow x) const;
  double dose_alpha(CovariateRow x) const;
  double dose_beta(CovariateRow x) const;
  double outcome_treated(double dose, CovariateRow x) const;
  double outcome_untreated(CovariateRow x) const;
};

// n points from lo to hi inclusive.
ScenarioParams::Vec linspace10(double lo, double hi);

struct ScenarioSpec {
  int scenario = 1;
  std::size_t n = 2000;
  std::uint64_t seed = 1;
  std::uint64_t replicate = 0;
};

void validate(const ScenarioSpec& spec);

// y0 is identically 0 and y1 carries dY.
PanelDataset simulate_scenario(const ScenarioSpec& spec);

// The true nuisance functions of a scenario. The dose density is the Beta law
// averaged over grid cells, without flooring.
class OracleNuisance final : public NuisanceModel {
 public:
  OracleNuisance(ScenarioParams params, std::shared_ptr<const DoseGrid> grid, double untreated_shift = 0.0);

  const std::shared_ptr<const DoseGrid>& grid_ptr() const override { return grid_; }
  double outcome_treated(double dose, CovariateRow x) const override;
  double outcome_untreated(CovariateRow x) const override;
  double treated_probability(CovariateRow x) const override;
  std::size_t dose_density(CovariateRow x, std::span<double> out) const override;

 private:
  ScenarioParams params_;
  std::shared_ptr<const DoseGrid> grid_;
  double untreated_shift_;
};

struct OracleTruth {
  double truth = 0.0;
  double mc_se = 0.0;
};

// Monte Carlo truth over treated covariate draws (rejection on P(A>0|X)),
// applying the intervention to the true dose density on `grid`.
OracleTruth oracle_truth(int scenario, const InterventionSpec& spec, std::size_t n_mc, std::uint64_t seed,
                         std::shared_ptr<const DoseGrid> grid = nullptr);

// One pass over the draws for a whole tilt grid.
std::vector<OracleTruth> oracle_truth_tilt(int scenario, std::span<const double> deltas, std::size_t n_mc,
                                           std::uint64_t seed, std::shared_ptr<const DoseGrid> grid = nullptr);

enum class NuisanceSource {
  learned,           // fitted on each training split
  oracle,            // true functions
  oracle_corrupted,  // true functions with mu_{A=0} shifted by +1
};

struct StudyConfig {
  int scenario = 1;
  std::size_t n = 2000;
  int replicates = 300;
  int folds = 5;
  std::uint64_t seed = 1;
  std::vector<double> deltas;
  std::size_t n_mc = 200000;
  std::size_t grid_size = 101;
  double ci_level = 0.95;
  CorrectionWeight weight = CorrectionWeight::odds;
  NuisanceSource source = NuisanceSource::learned;
  NuisanceLearners learners;
  bool keep_records = true;
};

struct StudyRow {
  double delta = 0.0;
  double truth = 0.0;
  double truth_mc_se = 0.0;
  double mean_psi = 0.0;
  double bias = 0.0;
  double mc_se = 0.0;  // sd of psi-hat across replicates / sqrt(replicates)
  double coverage = 0.0;
  double mean_se = 0.0;
  double mean_variance = 0.0;    // mean sigma-hat^2
  double scaled_mc_variance = 0.0;  // n Var_MC(psi-hat)
};

struct ReplicateRecord {
  int replicate = 0;
  double delta = 0.0;
  double psi_hat = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double truth = 0.0;
};

struct StudyResult {
  StudyConfig config;
  std::vector<StudyRow> rows;
  std::vector<ReplicateRecord> records;  // replicate-major
  double runtime_seconds = 0.0;
};

void validate(const StudyConfig& config);

StudyResult run_study(const StudyConfig& config);

}  // namespace tiltdid
