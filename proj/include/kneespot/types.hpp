#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "kneespot/error.hpp"

namespace kneespot {

/// Cycle numbers and sample positions are 1-based throughout the library.
/// Conversions to 0-based offsets happen only inside implementations.
using CycleNumber = std::int64_t;

struct VoltageSample {
    std::int64_t time_step = 0; // 1-based, strictly increasing
    double voltage = 0.0;       // volts

    friend bool operator==(const VoltageSample&, const VoltageSample&) = default;
};

/// Plausibility window applied at ingestion; catches unit errors without
/// rejecting real discharge data (cells here run 3.3 V down to 2.0 V).
struct VoltageWindow {
    double lo = 1.5;
    double hi = 4.5;
};

/// One raw discharge cycle: voltage against 1-based time step, uneven length.
struct DischargeCycle {
    CycleNumber cycle_number = 0;
    std::vector<VoltageSample> samples;

    std::size_t length() const { return samples.size(); }

    friend bool operator==(const DischargeCycle&, const DischargeCycle&) = default;
};

/// The cycle every other cycle of the same battery is aligned against.
/// Its length d fixes the length of every synchronized trajectory.
struct ReferenceCycle {
    DischargeCycle cycle;

    std::size_t d() const { return cycle.samples.size(); }
};

/// Warped time-index trajectory of one cycle, length exactly d.
/// Entry l holds the cycle-side time step matched to reference step l,
/// so the reference itself synchronizes to the identity [1, 2, ..., d].
struct SynchronizedCycle {
    CycleNumber cycle_number = 0;
    std::vector<double> warped_indices;

    std::size_t length() const { return warped_indices.size(); }

    friend bool operator==(const SynchronizedCycle&, const SynchronizedCycle&) = default;
};

/// K synchronized cycles concatenated into one flat sequence of n = d * K samples.
class DischargeSeries {
public:
    DischargeSeries() = default;
    explicit DischargeSeries(std::size_t cycle_length) : d_(cycle_length) {}

    void append(const SynchronizedCycle& cycle) {
        if (d_ == 0) d_ = cycle.length();
        if (cycle.length() != d_)
            fail(Errc::cycle_length_mismatch,
                 "cycle " + std::to_string(cycle.cycle_number) + " has length " +
                     std::to_string(cycle.length()) + ", series cycle length is " + std::to_string(d_));
        samples_.insert(samples_.end(), cycle.warped_indices.begin(), cycle.warped_indices.end());
        ++cycle_count_;
    }

    const std::vector<double>& samples() const { return samples_; }
    std::size_t size() const { return samples_.size(); }       // n
    std::size_t cycle_length() const { return d_; }            // d
    std::size_t cycle_count() const { return cycle_count_; }   // K

    friend bool operator==(const DischargeSeries&, const DischargeSeries&) = default;

private:
    std::vector<double> samples_;
    std::size_t d_ = 0;
    std::size_t cycle_count_ = 0;
};

/// Per-cycle SOH as a fraction of nominal capacity. Headroom above 1 allows
/// measurement noise on a fresh cell.
struct SOHSeries {
    std::vector<double> values;      // values[c-1] is the SOH at cycle c
    double nominal_capacity = 1.1;   // ampere-hours

    std::size_t size() const { return values.size(); }
    double at_cycle(CycleNumber c) const { return values.at(static_cast<std::size_t>(c - 1)); }

    friend bool operator==(const SOHSeries&, const SOHSeries&) = default;
};

constexpr double kSohHeadroom = 1.2;

/// Validates raw (time, voltage) pairs into a DischargeCycle.
/// Rejects empty input, non-increasing time steps and voltages outside the window.
DischargeCycle validate_cycle(CycleNumber cycle_number,
                              const std::vector<std::pair<std::int64_t, double>>& raw,
                              const VoltageWindow& window = {});

/// Checks the SOHSeries invariant 0 < Q <= 1.2 for every entry.
void validate_soh(const SOHSeries& soh);

} // namespace kneespot
