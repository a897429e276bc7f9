#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tiltdid {

enum class Errc {
  // ingestion
  io_error,
  missing_column,
  non_numeric_value,
  treatment_out_of_range,
  all_treated_or_all_untreated,
  // folds and learners
  too_few_units_per_stratum,
  insufficient_rows,
  singular_design,
  bandwidth_non_positive,
  // interventions
  invalid_parameter,
  no_mass_above_threshold,
  // estimators
  no_untreated_units,
  no_treated_units,
  dose_outside_grid,
  unsupported_intervention_for_one_step,
  invalid_argument,
};

const char* errc_name(Errc code);

/// Errors in the ingestion family map to CLI exit code 2, the rest to 3.
bool is_input_error(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Error(Errc code, const std::string& what, std::size_t row, std::string column = {})
      : std::runtime_error(what), code_(code), row_(row), column_(std::move(column)) {}

  Errc code() const noexcept { return code_; }
  // 1-based data row (header excluded), 0 when not row-specific.
  std::size_t row() const noexcept { return row_; }
  const std::string& column() const noexcept { return column_; }

 private:
  Errc code_;
  std::size_t row_ = 0;
  std::string column_;
};

}  // namespace tiltdid
