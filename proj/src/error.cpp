#include "tiltdid/error.hpp"

namespace tiltdid {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::io_error: return "IoError";
    case Errc::missing_column: return "MissingColumn";
    case Errc::non_numeric_value: return "NonNumericValue";
    case Errc::treatment_out_of_range: return "TreatmentOutOfRange";
    case Errc::all_treated_or_all_untreated: return "AllTreatedOrAllUntreated";
    case Errc::too_few_units_per_stratum: return "TooFewUnitsPerStratum";
    case Errc::insufficient_rows: return "InsufficientRows";
    case Errc::singular_design: return "SingularDesign";
    case Errc::bandwidth_non_positive: return "BandwidthNonPositive";
    case Errc::invalid_parameter: return "InvalidParameter";
    case Errc::no_mass_above_threshold: return "NoMassAboveThreshold";
    case Errc::no_untreated_units: return "NoUntreatedUnits";
    case Errc::no_treated_units: return "NoTreatedUnits";
    case Errc::dose_outside_grid: return "DoseOutsideGrid";
    case Errc::unsupported_intervention_for_one_step: return "UnsupportedInterventionForOneStep";
    case Errc::invalid_argument: return "InvalidArgument";
  }
  return "Unknown";
}

bool is_input_error(Errc code) {
  switch (code) {
    case Errc::io_error:
    case Errc::missing_column:
    case Errc::non_numeric_value:
    case Errc::treatment_out_of_range:
    case Errc::all_treated_or_all_untreated:
    case Errc::invalid_parameter:
    case Errc::invalid_argument:
      return true;
    default:
      return false;
  }
}

}  // namespace tiltdid
