#include "tiltdid/report.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <system_error>

#include "tiltdid/error.hpp"

namespace tiltdid {

namespace {

nlohmann::json number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

template <class Fill>
void write_atomically(const std::filesystem::path& path, Fill&& fill) {
  auto staging = path;
  staging += ".partial";
  {
    std::ofstream out(staging, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io_error, "cannot open " + staging.string() + " for writing");
    fill(out);
    out.flush();
    if (!out) throw Error(Errc::io_error, "write failed for " + staging.string());
  }
  std::error_code ec;
  std::filesystem::rename(staging, path, ec);
  if (ec) {
    std::filesystem::remove(staging, ec);
    throw Error(Errc::io_error, "cannot move output into " + path.string());
  }
}

std::string fixed(double v, int precision) {
  if (!std::isfinite(v)) return format_number(v);
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

nlohmann::json config_json(const StudyConfig& c) {
  const char* source = c.source == NuisanceSource::learned ? "learned"
                       : c.source == NuisanceSource::oracle ? "oracle"
                                                            : "oracle_corrupted";
  return {{"scenario", c.scenario},
          {"n", c.n},
          {"replicates", c.replicates},
          {"folds", c.folds},
          {"seed", c.seed},
          {"n_mc", c.n_mc},
          {"grid_size", c.grid_size},
          {"ci_level", c.ci_level},
          {"weight", c.weight == CorrectionWeight::odds ? "odds" : "literal"},
          {"nuisance", source}};
}

}  // namespace

OutputFormat parse_format(const std::string& text) {
  if (text == "csv") return OutputFormat::csv;
  if (text == "json") return OutputFormat::json;
  throw Error(Errc::invalid_argument, "unknown output format '" + text + "' (csv or json)");
}

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

nlohmann::json to_json(const EstimateResult& r) {
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : r.per_fold) {
    folds.push_back({{"fold", f.fold}, {"size", f.size}, {"psi", number(f.psi)},
                     {"psi1", number(f.psi1)}, {"psi2", number(f.psi2)}});
  }
  nlohmann::json eif = nlohmann::json::array();
  for (double v : r.eif_values) eif.push_back(number(v));
  return {{"intervention", r.intervention},
          {"psi_hat", number(r.psi_hat)},
          {"se", number(r.se)},
          {"variance", number(r.variance)},
          {"ci_low", number(r.ci_low)},
          {"ci_high", number(r.ci_high)},
          {"ci_level", r.ci_level},
          {"psi1_hat", number(r.psi1_hat)},
          {"psi2_hat", number(r.psi2_hat)},
          {"plugin_hat", number(r.plugin_hat)},
          {"n", r.n},
          {"per_fold", folds},
          {"eif_values", eif},
          {"diagnostics",
           {{"clamped_propensities", r.diagnostics.clamped_propensities},
            {"floored_density_points", r.diagnostics.floored_density_points},
            {"learner_flags", r.diagnostics.learner_flags},
            {"warnings", r.diagnostics.warnings}}}};
}

nlohmann::json to_json(const StudyResult& s) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : s.rows) {
    rows.push_back({{"delta", r.delta},
                    {"truth", number(r.truth)},
                    {"truth_mc_se", number(r.truth_mc_se)},
                    {"mean_psi", number(r.mean_psi)},
                    {"bias", number(r.bias)},
                    {"mc_se", number(r.mc_se)},
                    {"coverage", number(r.coverage)},
                    {"mean_se", number(r.mean_se)},
                    {"mean_variance", number(r.mean_variance)},
                    {"scaled_mc_variance", number(r.scaled_mc_variance)}});
  }
  return {{"config", config_json(s.config)}, {"replicates", s.config.replicates}, {"rows", rows}};
}

void write_estimates(const std::vector<LabelledEstimate>& estimates, const std::filesystem::path& path,
                     OutputFormat format) {
  write_atomically(path, [&](std::ostream& out) {
    if (format == OutputFormat::json) {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& e : estimates) {
        auto j = to_json(e.result);
        j["delta"] = number(e.delta);
        arr.push_back(std::move(j));
      }
      out << arr.dump(2) << '\n';
      return;
    }
    out << "delta,psi_hat,se,ci_low,ci_high\n";
    for (const auto& e : estimates) {
      out << format_number(e.delta) << ',' << format_number(e.result.psi_hat) << ','
          << format_number(e.result.se) << ',' << format_number(e.result.ci_low) << ','
          << format_number(e.result.ci_high) << '\n';
    }
  });
}

void write_study(const StudyResult& study, const std::filesystem::path& path, OutputFormat format) {
  write_atomically(path, [&](std::ostream& out) {
    if (format == OutputFormat::json) {
      out << to_json(study).dump(2) << '\n';
      return;
    }
    out << "delta,truth,truth_mc_se,mean_psi,bias,mc_se,coverage,mean_se,mean_variance,scaled_mc_variance\n";
    for (const auto& r : study.rows) {
      out << format_number(r.delta) << ',' << format_number(r.truth) << ',' << format_number(r.truth_mc_se) << ','
          << format_number(r.mean_psi) << ',' << format_number(r.bias) << ',' << format_number(r.mc_se) << ','
          << format_number(r.coverage) << ',' << format_number(r.mean_se) << ','
          << format_number(r.mean_variance) << ',' << format_number(r.scaled_mc_variance) << '\n';
    }
  });
}

void write_plot_data(const StudyResult& study, const std::filesystem::path& path) {
  write_atomically(path, [&](std::ostream& out) {
    out << "replicate,delta,psi_hat,ci_low,ci_high,truth\n";
    for (const auto& r : study.records) {
      out << r.replicate << ',' << format_number(r.delta) << ',' << format_number(r.psi_hat) << ','
          << format_number(r.ci_low) << ',' << format_number(r.ci_high) << ',' << format_number(r.truth) << '\n';
    }
  });
}

void write_density_curves(const std::vector<LabelledCurve>& curves, const std::filesystem::path& path,
                          OutputFormat format) {
  write_atomically(path, [&](std::ostream& out) {
    if (format == OutputFormat::json) {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& c : curves) {
        arr.push_back({{"delta", number(c.delta)},
                       {"d", c.curve.grid().points()},
                       {"q", std::vector<double>(c.curve.values().begin(), c.curve.values().end())}});
      }
      out << arr.dump(2) << '\n';
      return;
    }
    out << "delta,d,q\n";
    for (const auto& c : curves) {
      for (std::size_t m = 0; m < c.curve.size(); ++m) {
        out << format_number(c.delta) << ',' << format_number(c.curve.grid().point(m)) << ','
            << format_number(c.curve[m]) << '\n';
      }
    }
  });
}

std::string estimate_table(const std::vector<LabelledEstimate>& estimates) {
  std::ostringstream os;
  os << std::left << std::setw(28) << "intervention" << std::right << std::setw(11) << "psi_hat"
     << std::setw(11) << "se" << std::setw(24) << "interval" << '\n';
  for (const auto& e : estimates) {
    const auto& r = e.result;
    os << std::left << std::setw(28) << r.intervention << std::right << std::setw(11) << fixed(r.psi_hat, 4)
       << std::setw(11) << fixed(r.se, 4) << std::setw(24)
       << ("[" + fixed(r.ci_low, 4) + ", " + fixed(r.ci_high, 4) + "]") << '\n';
    for (const auto& w : r.diagnostics.warnings) os << "  warning: " << w << '\n';
  }
  return os.str();
}

std::string study_table(const StudyResult& study) {
  std::ostringstream os;
  os << std::setw(8) << "delta" << std::setw(10) << "truth" << std::setw(10) << "mean" << std::setw(10) << "bias"
     << std::setw(10) << "mc_se" << std::setw(10) << "coverage" << std::setw(10) << "mean_se" << '\n';
  for (const auto& r : study.rows) {
    os << std::setw(8) << fixed(r.delta, 2) << std::setw(10) << fixed(r.truth, 4) << std::setw(10)
       << fixed(r.mean_psi, 4) << std::setw(10) << fixed(r.bias, 4) << std::setw(10) << fixed(r.mc_se, 4)
       << std::setw(10) << fixed(r.coverage, 3) << std::setw(10) << fixed(r.mean_se, 4) << '\n';
  }
  return os.str();
}

}  // namespace tiltdid
