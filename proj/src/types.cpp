#include "kneespot/types.hpp"

#include <cmath>
#include <string>

namespace kneespot {

DischargeCycle validate_cycle(CycleNumber cycle_number,
                              const std::vector<std::pair<std::int64_t, double>>& raw,
                              const VoltageWindow& window) {
    if (raw.empty()) fail(Errc::empty_cycle, "cycle " + std::to_string(cycle_number) + " has no samples");

    DischargeCycle cycle;
    cycle.cycle_number = cycle_number;
    cycle.samples.reserve(raw.size());

    std::int64_t prev_time = 0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const auto [time_step, voltage] = raw[i];
        if (i == 0 && time_step != 1)
            fail(Errc::non_monotone_time,
                 "cycle " + std::to_string(cycle_number) + ": time steps must start at 1, got " +
                     std::to_string(time_step));
        if (time_step <= prev_time)
            fail(Errc::non_monotone_time,
                 "cycle " + std::to_string(cycle_number) + ": time step " + std::to_string(time_step) +
                     " at sample " + std::to_string(i + 1) + " does not increase (previous " +
                     std::to_string(prev_time) + ")");
        if (!(voltage >= window.lo && voltage <= window.hi))
            fail(Errc::voltage_out_of_range,
                 "cycle " + std::to_string(cycle_number) + ": voltage " + std::to_string(voltage) +
                     " outside [" + std::to_string(window.lo) + ", " + std::to_string(window.hi) + "]");
        cycle.samples.push_back({time_step, voltage});
        prev_time = time_step;
    }
    return cycle;
}

void validate_soh(const SOHSeries& soh) {
    for (std::size_t i = 0; i < soh.values.size(); ++i) {
        const double q = soh.values[i];
        if (!(q > 0.0 && q <= kSohHeadroom) || !std::isfinite(q))
            fail(Errc::out_of_range,
                 "SOH " + std::to_string(q) + " at cycle " + std::to_string(i + 1) + " outside (0, 1.2]");
    }
}

} // namespace kneespot
