#include "kneespot/error.hpp"

namespace kneespot {

const char* errc_name(Errc c) {
    switch (c) {
    case Errc::empty_cycle: return "EmptyCycle";
    case Errc::non_monotone_time: return "NonMonotoneTime";
    case Errc::voltage_out_of_range: return "VoltageOutOfRange";
    case Errc::path_reference_mismatch: return "PathReferenceMismatch";
    case Errc::out_of_range: return "OutOfRange";
    case Errc::series_too_short: return "SeriesTooShort";
    case Errc::cycle_length_mismatch: return "CycleLengthMismatch";
    case Errc::query_not_cycle_aligned: return "QueryNotCycleAligned";
    case Errc::too_few_entries: return "TooFewEntries";
    case Errc::detector_finished: return "DetectorFinished";
    case Errc::degenerate_x: return "DegenerateX";
    case Errc::zero_variance: return "ZeroVariance";
    case Errc::too_few_points: return "TooFewPoints";
    case Errc::non_finite_likelihood: return "NonFiniteLikelihood";
    case Errc::model_not_fitted: return "ModelNotFitted";
    case Errc::too_few_batteries: return "TooFewBatteries";
    case Errc::misaligned_data: return "MisalignedData";
    case Errc::non_finite_loss: return "NonFiniteLoss";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::length_mismatch: return "LengthMismatch";
    case Errc::spec_invalid: return "SpecInvalid";
    case Errc::too_short: return "TooShort";
    case Errc::never_reached: return "NeverReached";
    case Errc::malformed_row: return "MalformedRow";
    case Errc::missing_header: return "MissingHeader";
    case Errc::non_contiguous_cycles: return "NonContiguousCycles";
    case Errc::missing_soh: return "MissingSOH";
    case Errc::range_out_of_bounds: return "RangeOutOfBounds";
    case Errc::no_model_for_category: return "NoModelForCategory";
    case Errc::bad_artifact: return "BadArtifact";
    case Errc::io_error: return "IoError";
    }
    return "UnknownError";
}

} // namespace kneespot
