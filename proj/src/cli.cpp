#include "tiltdid/cli.hpp"

#include <cmath>
#include <cstdlib>
#include <memory>
#include <optional>

#include <omp.h>

#include "CLI11.hpp"
#include "tiltdid/data.hpp"
#include "tiltdid/error.hpp"
#include "tiltdid/estimators.hpp"
#include "tiltdid/nuisance.hpp"
#include "tiltdid/report.hpp"
#include "tiltdid/simulation.hpp"

namespace tiltdid {

namespace {

struct InterventionFlags {
  std::string family = "tilt";
  std::optional<double> delta;
  std::string delta_grid;
  double d_prime = 0.5;
  double d_star = 0.0;
  double eta = 0.0;
  double sigma = 0.15;
  std::string distribution = "uniform";
};

struct CommonFlags {
  int folds = 5;
  std::size_t grid_size = DoseGrid::kDefaultSize;
  std::optional<double> bandwidth;
  std::uint64_t seed = 1;
  double ci_level = 0.95;
  std::string output;
  std::string format = "csv";
  bool literal_weight = false;
  int threads = 0;
};

struct EstimateFlags {
  std::string input;
  std::vector<std::string> covariates;
  std::string outcome_learner = "ols";
  std::string untreated_learner = "ols";
  int dose_degree = 1;
};

struct SimulateFlags {
  int scenario = 1;
  std::size_t n = 2000;
  int reps = 300;
  std::size_t n_mc = 200000;
  std::string nuisance = "learned";
  bool full_scale = false;
  std::string plot_data;
};

struct CurveFlags {
  std::string base = "uniform";
  std::string input;
  std::vector<std::string> covariates;
};

void add_intervention_flags(CLI::App* cmd, InterventionFlags& f) {
  cmd->add_option("--intervention", f.family, "tilt|kernel|mindose|shift|parametric")
      ->check(CLI::IsMember({"tilt", "kernel", "mindose", "shift", "parametric"}));
  cmd->add_option("--delta", f.delta, "tilt increment or kernel bandwidth");
  cmd->add_option("--delta-grid", f.delta_grid, "lo:hi:step (tilt only)");
  cmd->add_option("--d-prime", f.d_prime, "kernel centre d'");
  cmd->add_option("--d-star", f.d_star, "minimum dose d*");
  cmd->add_option("--eta", f.eta, "mean shift of the parametric-shift law");
  cmd->add_option("--sigma", f.sigma, "sd of the parametric-shift law");
  cmd->add_option("--distribution", f.distribution, "parametric law: uniform|beta:a,b|truncnorm:m,s");
}

void add_common_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--folds", f.folds, "cross-fitting folds K")->check(CLI::Range(2, 1000));
  cmd->add_option("--grid-size", f.grid_size, "dose grid points M");
  cmd->add_option("--bandwidth", f.bandwidth, "dose-density kernel bandwidth (default: automatic)");
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--ci-level", f.ci_level, "confidence level");
  cmd->add_option("--output", f.output, "output file");
  cmd->add_option("--format", f.format, "csv|json")->check(CLI::IsMember({"csv", "json"}));
  cmd->add_flag("--literal-phi2-weight", f.literal_weight, "use (1-pi)/pi on the untreated residual");
  cmd->add_option("--threads", f.threads, "worker threads (default: TILTDID_THREADS or all cores)");
}

void set_threads(int requested) {
  int threads = requested;
  if (threads <= 0) {
    if (const char* env = std::getenv("TILTDID_THREADS")) {
      char* end = nullptr;
      const long v = std::strtol(env, &end, 10);
      if (end != env && *end == '\0' && v > 0) threads = static_cast<int>(v);
    }
  }
  if (threads > 0) omp_set_num_threads(threads);
}

std::vector<double> resolve_deltas(const InterventionFlags& f) {
  if (!f.delta_grid.empty() && f.delta) {
    throw Error(Errc::invalid_argument, "--delta and --delta-grid are mutually exclusive");
  }
  if (f.delta) return {*f.delta};
  return parse_delta_grid(f.delta_grid.empty() ? "-10:10:1" : f.delta_grid);
}

// The family parameter reported in the delta column.
std::pair<InterventionSpec, double> single_spec(const InterventionFlags& f) {
  if (!f.delta_grid.empty()) throw Error(Errc::invalid_argument, "--delta-grid applies to the tilt family only");
  if (f.family == "kernel") {
    const double bw = f.delta.value_or(0.1);
    return {GaussianKernel{bw, f.d_prime}, bw};
  }
  if (f.family == "mindose") return {MinimumDose{f.d_star}, f.d_star};
  if (f.family == "shift") return {ParametricShift{f.eta, f.sigma}, f.eta};
  return {Parametric{parse_distribution(f.distribution)}, std::nan("")};
}

CrossFitOptions make_options(const CommonFlags& c, std::shared_ptr<const DoseGrid> grid) {
  CrossFitOptions opts;
  opts.folds = c.folds;
  opts.seed = c.seed;
  opts.ci_level = c.ci_level;
  opts.weight = c.literal_weight ? CorrectionWeight::literal : CorrectionWeight::odds;
  opts.grid = std::move(grid);
  opts.learners.bandwidth = c.bandwidth;
  return opts;
}

int cmd_estimate(const InterventionFlags& iv, const CommonFlags& c, const EstimateFlags& e, std::ostream& out) {
  const auto data = load_csv(e.input, e.covariates);
  const auto grid = std::make_shared<const DoseGrid>(c.grid_size);
  auto opts = make_options(c, grid);
  opts.learners.outcome = LearnerSpec::parse(e.outcome_learner);
  opts.learners.outcome.dose_degree = e.dose_degree;
  opts.learners.untreated = LearnerSpec::parse(e.untreated_learner);
  opts.learners.outcome.validate();
  opts.learners.untreated.validate();

  std::vector<LabelledEstimate> rows;
  if (iv.family == "tilt") {
    const auto deltas = resolve_deltas(iv);
    auto results = onestep_crossfit_tilt(data, deltas, opts);
    for (std::size_t t = 0; t < deltas.size(); ++t) rows.push_back({deltas[t], std::move(results[t])});
  } else {
    const auto [spec, label] = single_spec(iv);
    validate(spec);
    rows.push_back({label, depends_on_observed_density(spec) ? plugin_estimate(data, spec, opts)
                                                             : onestep_crossfit(data, spec, opts)});
  }
  if (!c.output.empty()) write_estimates(rows, c.output, parse_format(c.format));
  out << estimate_table(rows);
  return kExitOk;
}

int cmd_simulate(const InterventionFlags& iv, const CommonFlags& c, const SimulateFlags& s, std::ostream& out) {
  StudyConfig cfg;
  cfg.scenario = s.scenario;
  cfg.n = s.full_scale ? 5000 : s.n;
  cfg.replicates = s.full_scale ? 1000 : s.reps;
  cfg.folds = c.folds;
  cfg.seed = c.seed;
  cfg.n_mc = s.n_mc;
  cfg.grid_size = c.grid_size;
  cfg.ci_level = c.ci_level;
  cfg.weight = c.literal_weight ? CorrectionWeight::literal : CorrectionWeight::odds;
  cfg.learners.bandwidth = c.bandwidth;
  cfg.keep_records = !s.plot_data.empty();
  if (iv.family != "tilt") throw Error(Errc::invalid_argument, "simulation studies use the tilt family");
  cfg.deltas = resolve_deltas(iv);
  if (s.nuisance == "oracle") {
    cfg.source = NuisanceSource::oracle;
  } else if (s.nuisance == "oracle-corrupted") {
    cfg.source = NuisanceSource::oracle_corrupted;
  }
  validate(cfg);

  const auto study = run_study(cfg);
  const std::string path = c.output.empty() ? "study." + c.format : c.output;
  write_study(study, path, parse_format(c.format));
  if (!s.plot_data.empty()) write_plot_data(study, s.plot_data);
  out << study_table(study);
  out << "replicates: " << cfg.replicates << ", runtime " << format_number(std::round(study.runtime_seconds * 10) / 10)
      << " s\n";
  return kExitOk;
}

int cmd_density_curve(const InterventionFlags& iv, const CommonFlags& c, const CurveFlags& f, std::ostream& out) {
  const auto grid = std::make_shared<const DoseGrid>(c.grid_size);
  std::optional<DensityCurve> base;
  if (!f.input.empty()) {
    // Observed dose density averaged over treated covariates.
    const auto data = load_csv(f.input, f.covariates);
    std::vector<RowIndex> treated;
    for (RowIndex i = 0; i < data.size(); ++i) {
      if (data.treated(i)) treated.push_back(i);
    }
    const auto model = fit_dose_density(data, treated, grid, c.bandwidth);
    std::vector<double> avg(grid->size(), 0.0), row(grid->size());
    for (auto i : treated) {
      model.evaluate(data.x(i), row);
      for (std::size_t m = 0; m < row.size(); ++m) avg[m] += row[m];
    }
    for (auto& v : avg) v /= static_cast<double>(treated.size());
    base = DensityCurve::normalized(grid, std::move(avg));
  } else {
    base = parametric_density(parse_distribution(f.base), grid);
  }

  std::vector<LabelledCurve> curves;
  if (iv.family == "tilt") {
    for (double d : resolve_deltas(iv)) curves.push_back({d, tilt_density(*base, d)});
  } else {
    const auto [spec, label] = single_spec(iv);
    validate(spec);
    curves.push_back({label, apply_intervention(spec, *base)});
  }
  const std::string path = c.output.empty() ? "density_curve." + c.format : c.output;
  write_density_curves(curves, path, parse_format(c.format));
  out << "wrote " << curves.size() << " curve(s) of " << grid->size() << " points to " << path << '\n';
  return kExitOk;
}

}  // namespace

std::vector<double> parse_delta_grid(const std::string& text) {
  double parts[3];
  std::size_t start = 0;
  for (int k = 0; k < 3; ++k) {
    const auto stop = k < 2 ? text.find(':', start) : text.size();
    if (stop == std::string::npos) throw Error(Errc::invalid_argument, "delta grid must be lo:hi:step");
    const std::string piece = text.substr(start, stop - start);
    char* end = nullptr;
    parts[k] = std::strtod(piece.c_str(), &end);
    if (piece.empty() || end != piece.c_str() + piece.size() || !std::isfinite(parts[k])) {
      throw Error(Errc::invalid_argument, "delta grid must be lo:hi:step, got '" + text + "'");
    }
    start = stop + 1;
  }
  const double lo = parts[0], hi = parts[1], step = parts[2];
  if (!(step > 0.0) || hi < lo) throw Error(Errc::invalid_argument, "delta grid needs lo <= hi and step > 0");
  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  if (count > 100000) throw Error(Errc::invalid_argument, "delta grid is too large");
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = lo + static_cast<double>(i) * step;
  return out;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stochastic dose effects in difference-in-differences designs", "tiltdid"};
  app.require_subcommand(1);

  InterventionFlags iv;
  CommonFlags common;
  EstimateFlags est;
  SimulateFlags sim;
  CurveFlags curve;

  auto* estimate = app.add_subcommand("estimate", "estimate the ASDT curve on a panel CSV");
  estimate->add_option("input,--input", est.input, "CSV with y0, y1, a and covariate columns")->required();
  estimate->add_option("--covariates", est.covariates, "covariate columns (default: all others)")->delimiter(',');
  estimate->add_option("--outcome-learner", est.outcome_learner, "ols|ridge:lambda|smoother:h");
  estimate->add_option("--untreated-learner", est.untreated_learner, "ols|ridge:lambda|smoother:h");
  estimate->add_option("--dose-degree", est.dose_degree, "polynomial degree of the dose in mu")->check(CLI::Range(1, 2));
  add_intervention_flags(estimate, iv);
  add_common_flags(estimate, common);

  auto* simulate = app.add_subcommand("simulate", "bias and coverage study on a simulation scenario");
  simulate->add_option("--scenario", sim.scenario, "1 (symmetric doses) or 2 (skewed doses)")->check(CLI::IsMember({1, 2}));
  simulate->add_option("--n", sim.n, "sample size");
  simulate->add_option("--reps", sim.reps, "replicates (at least 50)");
  simulate->add_option("--n-mc", sim.n_mc, "Monte Carlo draws for the oracle truth");
  simulate->add_option("--nuisance", sim.nuisance, "learned|oracle|oracle-corrupted")
      ->check(CLI::IsMember({"learned", "oracle", "oracle-corrupted"}));
  simulate->add_flag("--full-scale", sim.full_scale, "n = 5000 and 1000 replicates");
  simulate->add_option("--emit-plot-data", sim.plot_data, "long-format per-replicate CSV");
  add_intervention_flags(simulate, iv);
  add_common_flags(simulate, common);

  auto* density = app.add_subcommand("density-curve", "write intervention densities on the dose grid");
  density->add_option("--base", curve.base, "uniform|beta:a,b|truncnorm:m,s");
  density->add_option("--input", curve.input, "CSV whose fitted dose density is the base");
  density->add_option("--covariates", curve.covariates, "covariate columns")->delimiter(',');
  add_intervention_flags(density, iv);
  add_common_flags(density, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitInput;
  }

  try {
    if (common.grid_size < DoseGrid::kMinSize) {
      throw Error(Errc::invalid_argument, "--grid-size must be at least " + std::to_string(DoseGrid::kMinSize));
    }
    if (!(common.ci_level > 0.0 && common.ci_level < 1.0)) {
      throw Error(Errc::invalid_argument, "--ci-level must lie in (0,1)");
    }
    if (common.bandwidth && !(*common.bandwidth > 0.0)) {
      throw Error(Errc::invalid_argument, "--bandwidth must be positive");
    }
    set_threads(common.threads);
    if (estimate->parsed()) return cmd_estimate(iv, common, est, out);
    if (simulate->parsed()) return cmd_simulate(iv, common, sim, out);
    return cmd_density_curve(iv, common, curve, out);
  } catch (const Error& e) {
    err << "error [" << errc_name(e.code()) << "]: " << e.what() << '\n';
    return is_input_error(e.code()) ? kExitInput : kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace tiltdid
