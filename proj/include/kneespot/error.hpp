#pragma once

#include <stdexcept>
#include <string>

namespace kneespot {

enum class Errc {
    // cycle validation
    empty_cycle,
    non_monotone_time,
    voltage_out_of_range,
    // dtw / synchronization
    path_reference_mismatch,
    // matrix profile
    out_of_range,
    series_too_short,
    cycle_length_mismatch,
    query_not_cycle_aligned,
    // detector
    too_few_entries,
    detector_finished,
    // fleet analysis
    degenerate_x,
    zero_variance,
    too_few_points,
    non_finite_likelihood,
    model_not_fitted,
    too_few_batteries,
    // soh estimator
    misaligned_data,
    non_finite_loss,
    dimension_mismatch,
    length_mismatch,
    // synthetic data
    spec_invalid,
    too_short,
    never_reached,
    // io
    malformed_row,
    missing_header,
    non_contiguous_cycles,
    missing_soh,
    range_out_of_bounds,
    no_model_for_category,
    bad_artifact,
    io_error,
};

const char* errc_name(Errc c);

/// Exception carrying a stable error code alongside the message.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

    /// True for failures of input files rather than input content.
    bool is_io() const noexcept { return code_ == Errc::io_error; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

} // namespace kneespot
