#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "tiltdid/estimators.hpp"
#include "tiltdid/interventions.hpp"
#include "tiltdid/simulation.hpp"

namespace tiltdid {

enum class OutputFormat { csv, json };

OutputFormat parse_format(const std::string& text);

// Shortest round-trip decimal; "nan", "inf" and "-inf" for non-finite values.
std::string format_number(double value);

// One labelled estimate; `delta` is the family parameter used in CSV rows
// (tilt delta, kernel bandwidth, threshold d*, shift eta; NaN for fixed laws).
struct LabelledEstimate {
  double delta = 0.0;
  EstimateResult result;
};

nlohmann::json to_json(const EstimateResult& result);
nlohmann::json to_json(const StudyResult& study);

// Writes are staged to a sibling temporary file and renamed into place.
void write_estimates(const std::vector<LabelledEstimate>& estimates, const std::filesystem::path& path,
                     OutputFormat format);
void write_study(const StudyResult& study, const std::filesystem::path& path, OutputFormat format);
// Long format: replicate,delta,psi_hat,ci_low,ci_high,truth
void write_plot_data(const StudyResult& study, const std::filesystem::path& path);

struct LabelledCurve {
  double delta = 0.0;
  DensityCurve curve;
};
// delta,d,q
void write_density_curves(const std::vector<LabelledCurve>& curves, const std::filesystem::path& path,
                          OutputFormat format);

// Human-readable tables for standard output.
std::string estimate_table(const std::vector<LabelledEstimate>& estimates);
std::string study_table(const StudyResult& study);

}  // namespace tiltdid
