#include "tiltdid/simulation.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <random>

#include "tiltdid/error.hpp"
#include "tiltdid/rng.hpp"

namespace tiltdid {

namespace {

double dot(const ScenarioParams::Vec& coef, CovariateRow x) {
  double s = 0.0;
  for (std::size_t j = 0; j < kScenarioCovariates; ++j) s += coef[j] * x[static_cast<Eigen::Index>(j)];
  return s;
}

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void check_scenario(int scenario) {
  if (scenario != 1 && scenario != 2) throw Error(Errc::invalid_argument, "scenario must be 1 or 2");
}

// Treated covariate draws: n_mc proposals, each kept with probability
// P(A>0|X).
RowMatrix treated_draws(const ScenarioParams& params, std::size_t n_mc, std::uint64_t seed) {
  if (n_mc < kMinOracleDraws) {
    throw Error(Errc::invalid_argument, "oracle needs at least " + std::to_string(kMinOracleDraws) + " draws");
  }
  auto engine = make_engine(seed, StreamTag::oracle, static_cast<std::uint64_t>(params.scenario));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> kept;
  kept.reserve(n_mc * kScenarioCovariates);
  Eigen::RowVectorXd x(static_cast<Eigen::Index>(kScenarioCovariates));
  for (std::size_t i = 0; i < n_mc; ++i) {
    for (auto& v : x) v = unif(engine);
    if (unif(engine) < params.treated_probability(x)) kept.insert(kept.end(), x.begin(), x.end());
  }
  const auto rows = static_cast<Eigen::Index>(kept.size() / kScenarioCovariates);
  return Eigen::Map<const RowMatrix>(kept.data(), rows, static_cast<Eigen::Index>(kScenarioCovariates));
}

// mean and standard error of per-draw values, reduced in index order.
OracleTruth summarize(std::span<const double> values) {
  const auto n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

// Per-draw values for several interventions; column t of the result belongs
// to specs[t].
std::vector<OracleTruth> oracle_many(int scenario, const std::vector<InterventionSpec>& specs, std::size_t n_mc,
                                     std::uint64_t seed, std::shared_ptr<const DoseGrid> grid) {
  check_scenario(scenario);
  for (const auto& s : specs) validate(s);
  if (!grid) grid = std::make_shared<const DoseGrid>();
  const auto params = ScenarioParams::make(scenario);
  const RowMatrix draws = treated_draws(params, n_mc, seed);
  const auto n_draws = static_cast<std::size_t>(draws.rows());
  const auto m_count = grid->size();
  const auto n_specs = specs.size();
  std::vector<double> values(n_draws * n_specs);
  std::exception_ptr failure;

#pragma omp parallel
  {
    std::vector<double> pi(m_count), q(m_count);
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n_draws); ++i) {
      try {
        const CovariateRow x = draws.row(i);
        beta_cell_density(*grid, params.dose_alpha(x), params.dose_beta(x), pi);
        const double trend_gap = dot(params.gamma2, x) - dot(params.gamma1, x);
        for (std::size_t t = 0; t < n_specs; ++t) {
          apply_into(specs[t], *grid, pi, q);
          double mean_dose = 0.0;
          for (std::size_t m = 0; m < m_count; ++m) mean_dose += grid->weight(m) * grid->point(m) * q[m];
          values[static_cast<std::size_t>(i) * n_specs + t] = 0.5 * mean_dose + trend_gap;
        }
      } catch (...) {
#pragma omp critical(tiltdid_oracle)
        if (!failure) failure = std::current_exception();
      }
    }
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<OracleTruth> out;
  std::vector<double> column(n_draws);
  for (std::size_t t = 0; t < n_specs; ++t) {
    for (std::size_t i = 0; i < n_draws; ++i) column[i] = values[i * n_specs + t];
    out.push_back(summarize(column));
  }
  return out;
}

}  // namespace

ScenarioParams::Vec linspace10(double lo, double hi) {
  ScenarioParams::Vec v{};
  for (std::size_t j = 0; j < kScenarioCovariates; ++j) {
    v[j] = lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(kScenarioCovariates - 1);
  }
  return v;
}

ScenarioParams ScenarioParams::make(int scenario) {
  check_scenario(scenario);
  ScenarioParams p;
  p.scenario = scenario;
  if (scenario == 1) {
    p.lambda1 = linspace10(-0.2, 0.2);
    p.lambda2 = p.lambda1;
  } else {
    p.lambda1 = linspace10(-0.1, 0.5);
    p.lambda2 = linspace10(0.3, 0.7);
  }
  p.gamma1 = linspace10(-2.0, 2.0);
  p.gamma2 = p.gamma1;
  for (std::size_t j = 0; j < kScenarioCovariates; ++j) {
    p.propensity[j] = -0.12 + 0.02 * static_cast<double>(j + 1);
  }
  return p;
}

double ScenarioParams::treated_probability(CovariateRow x) const { return 0.7 + dot(propensity, x); }
double ScenarioParams::dose_alpha(CovariateRow x) const { return std::exp(dot(lambda1, x)); }
double ScenarioParams::dose_beta(CovariateRow x) const { return std::exp(dot(lambda2, x)); }
double ScenarioParams::outcome_treated(double dose, CovariateRow x) const { return 0.5 * dose + dot(gamma2, x); }
double ScenarioParams::outcome_untreated(CovariateRow x) const { return dot(gamma1, x); }

void validate(const ScenarioSpec& spec) {
  check_scenario(spec.scenario);
  if (spec.n < kMinScenarioRows) {
    throw Error(Errc::invalid_argument, "scenario size must be at least " + std::to_string(kMinScenarioRows));
  }
}

PanelDataset simulate_scenario(const ScenarioSpec& spec) {
  validate(spec);
  const auto params = ScenarioParams::make(spec.scenario);
  auto engine = make_engine(spec.seed, StreamTag::scenario,
                            (spec.replicate << 1) | static_cast<std::uint64_t>(spec.scenario - 1));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  const auto n = spec.n;
  RowMatrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kScenarioCovariates));
  std::vector<double> a(n), dy(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(row, j) = unif(engine);
    const CovariateRow xi = x.row(row);
    const bool treated = unif(engine) < params.treated_probability(xi);
    double mean = params.outcome_untreated(xi);
    if (treated) {
      std::gamma_distribution<double> ga(params.dose_alpha(xi), 1.0), gb(params.dose_beta(xi), 1.0);
      double d = 0.0;
      // A Beta draw of exactly 0 has probability zero but can appear in
      // floating point when the shape is small; redraw.
      while (!(d > 0.0)) {
        const double u = ga(engine), v = gb(engine);
        d = u / (u + v);
      }
      a[i] = d;
      mean = params.outcome_treated(d, xi);
    }
    dy[i] = mean + noise(engine);
  }
  return PanelDataset(std::vector<double>(n, 0.0), std::move(dy), std::move(a), std::move(x));
}

OracleNuisance::OracleNuisance(ScenarioParams params, std::shared_ptr<const DoseGrid> grid, double untreated_shift)
    : params_(std::move(params)), grid_(std::move(grid)), untreated_shift_(untreated_shift) {
  if (!grid_) grid_ = std::make_shared<const DoseGrid>();
}

double OracleNuisance::outcome_treated(double dose, CovariateRow x) const {
  return params_.outcome_treated(dose, x);
}

double OracleNuisance::outcome_untreated(CovariateRow x) const {
  return params_.outcome_untreated(x) + untreated_shift_;
}

double OracleNuisance::treated_probability(CovariateRow x) const { return params_.treated_probability(x); }

std::size_t OracleNuisance::dose_density(CovariateRow x, std::span<double> out) const {
  beta_cell_density(*grid_, params_.dose_alpha(x), params_.dose_beta(x), out);
  return 0;
}

OracleTruth oracle_truth(int scenario, const InterventionSpec& spec, std::size_t n_mc, std::uint64_t seed,
                         std::shared_ptr<const DoseGrid> grid) {
  return oracle_many(scenario, {spec}, n_mc, seed, std::move(grid)).front();
}

std::vector<OracleTruth> oracle_truth_tilt(int scenario, std::span<const double> deltas, std::size_t n_mc,
                                           std::uint64_t seed, std::shared_ptr<const DoseGrid> grid) {
  std::vector<InterventionSpec> specs;
  for (double d : deltas) specs.emplace_back(ExponentialTilt{d});
  return oracle_many(scenario, specs, n_mc, seed, std::move(grid));
}

void validate(const StudyConfig& config) {
  validate(ScenarioSpec{config.scenario, config.n, config.seed, 0});
  if (config.replicates < kMinReplicates) {
    throw Error(Errc::invalid_argument, "a study needs at least " + std::to_string(kMinReplicates) + " replicates");
  }
  if (config.folds < 2) throw Error(Errc::invalid_argument, "folds must be at least 2");
  if (config.deltas.empty()) throw Error(Errc::invalid_argument, "study needs at least one delta");
  if (!(config.ci_level > 0.0 && config.ci_level < 1.0)) {
    throw Error(Errc::invalid_parameter, "confidence level must lie in (0,1)");
  }
  for (double d : config.deltas) validate(ExponentialTilt{d});
}

StudyResult run_study(const StudyConfig& config) {
  validate(config);
  const auto start = std::chrono::steady_clock::now();
  const auto grid = std::make_shared<const DoseGrid>(config.grid_size);
  const auto truths = oracle_truth_tilt(config.scenario, config.deltas, config.n_mc, config.seed, grid);
  const auto n_deltas = config.deltas.size();
  const auto reps = static_cast<std::size_t>(config.replicates);

  CrossFitOptions base;
  base.folds = config.folds;
  base.ci_level = config.ci_level;
  base.weight = config.weight;
  base.execution = Execution::serial;
  base.grid = grid;
  base.learners = config.learners;
  if (config.source != NuisanceSource::learned) {
    const double shift = config.source == NuisanceSource::oracle_corrupted ? 1.0 : 0.0;
    auto oracle = std::make_shared<const OracleNuisance>(ScenarioParams::make(config.scenario), grid, shift);
    base.fitter = [oracle](const PanelDataset&, std::span<const RowIndex>) {
      return std::static_pointer_cast<const NuisanceModel>(oracle);
    };
  }

  // replicate-major: estimates[r * n_deltas + t]
  std::vector<EstimateResult> estimates(reps * n_deltas);
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(reps); ++r) {
    try {
      const auto rep = static_cast<std::uint64_t>(r);
      const auto data = simulate_scenario({config.scenario, config.n, config.seed, rep});
      CrossFitOptions opts = base;
      opts.seed = splitmix64(config.seed ^ splitmix64(rep));
      auto results = onestep_crossfit_tilt(data, config.deltas, opts);
      for (std::size_t t = 0; t < n_deltas; ++t) {
        results[t].per_fold.clear();
        estimates[static_cast<std::size_t>(r) * n_deltas + t] = std::move(results[t]);
      }
    } catch (...) {
#pragma omp critical(tiltdid_study)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  StudyResult out;
  out.config = config;
  const auto n_reps = static_cast<double>(reps);
  for (std::size_t t = 0; t < n_deltas; ++t) {
    StudyRow row;
    row.delta = config.deltas[t];
    row.truth = truths[t].truth;
    row.truth_mc_se = truths[t].mc_se;
    double sum = 0.0, sum_se = 0.0, sum_var = 0.0;
    std::size_t covered = 0;
    for (std::size_t r = 0; r < reps; ++r) {
      const auto& e = estimates[r * n_deltas + t];
      sum += e.psi_hat;
      sum_se += e.se;
      sum_var += e.variance;
      if (e.ci_low <= row.truth && row.truth <= e.ci_high) ++covered;
    }
    row.mean_psi = sum / n_reps;
    double ss = 0.0;
    for (std::size_t r = 0; r < reps; ++r) {
      const double dev = estimates[r * n_deltas + t].psi_hat - row.mean_psi;
      ss += dev * dev;
    }
    const double var_mc = ss / (n_reps - 1.0);
    row.bias = row.mean_psi - row.truth;
    row.mc_se = std::sqrt(var_mc / n_reps);
    row.coverage = static_cast<double>(covered) / n_reps;
    row.mean_se = sum_se / n_reps;
    row.mean_variance = sum_var / n_reps;
    row.scaled_mc_variance = static_cast<double>(config.n) * var_mc;
    out.rows.push_back(row);
  }
  if (config.keep_records) {
    out.records.reserve(reps * n_deltas);
    for (std::size_t r = 0; r < reps; ++r) {
      for (std::size_t t = 0; t < n_deltas; ++t) {
        const auto& e = estimates[r * n_deltas + t];
        out.records.push_back(
            {static_cast<int>(r), config.deltas[t], e.psi_hat, e.se, e.ci_low, e.ci_high, truths[t].truth});
      }
    }
  }
  out.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace tiltdid
