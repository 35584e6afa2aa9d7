#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "kneespot/types.hpp"

namespace kneespot {

/// Recipe for one synthetic battery: linear capacity fade that accelerates
/// quadratically after the knee cycle, discharge curves that shorten and
/// distort as health drops. Everything is driven by the seed, so equal specs
/// give bit-identical batteries.
struct SynthSpec {
    double nominal_capacity = 1.1;        // ampere-hours
    double stage1_fade_per_cycle = 1.5e-4; // SOH lost per cycle before the knee
    CycleNumber knee_cycle = 300;
    double post_knee_acceleration = 2e-4; // quadratic SOH loss coefficient after the knee
    double voltage_start = 3.3;
    double voltage_end = 2.0;
    std::size_t base_cycle_length = 64;   // time steps of a healthy cycle
    double noise_sigma = 0.005;           // volts, per sample
    std::uint64_t seed = 1;
    std::size_t cycle_count = 600;
    // How strongly discharge duration tracks SOH: a cycle at SOH q keeps
    // coupling*q + (1-coupling) of the base length. 1 means duration shrinks
    // in lockstep with capacity; smaller values model cell designs whose
    // runtime degrades more slowly than their capacity.
    double length_soh_coupling = 1.0;

    void validate() const;
};

struct SynthBattery {
    std::vector<DischargeCycle> cycles;
    SOHSeries soh;
    std::optional<CycleNumber> knee_truth; // absent when the spec has no acceleration in range
    std::optional<CycleNumber> eol_truth;  // absent when SOH never crosses the threshold
};

/// Generates the battery. The reported EOL truth uses the given threshold.
SynthBattery generate_battery(const SynthSpec& spec, double eol_threshold = 0.8);

/// Knee label from an SOH sequence: the smallest cycle V whose per-cycle SOH
/// drop first reaches alpha while the previous drop was still below it.
/// Returns nothing when no such cycle exists.
std::optional<CycleNumber> label_knee(const SOHSeries& soh, double alpha);

/// First cycle whose SOH falls below the threshold.
CycleNumber label_eol(const SOHSeries& soh, double threshold = 0.8);

} // namespace kneespot
