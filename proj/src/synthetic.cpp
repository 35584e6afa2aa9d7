#include "kneespot/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace kneespot {

namespace {

// Discharge curve shape: a long plateau followed by a steep tail, which is
// what a constant-current lithium-ion discharge looks like.
constexpr double kPlateauExponent = 3.0;
// How strongly the curve shape bends as health is lost.
constexpr double kWarpGain = 0.9;
// SOH floor keeping long post-knee runs inside the valid (0, 1.2] range.
constexpr double kSohFloor = 0.01;

double base_voltage(const SynthSpec& spec, double tau) {
    return spec.voltage_end +
           (spec.voltage_start - spec.voltage_end) * (1.0 - std::pow(tau, kPlateauExponent));
}

} // namespace

void SynthSpec::validate() const {
    auto bad = [](const std::string& what) { fail(Errc::spec_invalid, what); };
    if (!(nominal_capacity > 0.0)) bad("nominal capacity must be positive");
    if (!(stage1_fade_per_cycle >= 0.0)) bad("stage-1 fade rate must be non-negative");
    if (knee_cycle < 1) bad("knee cycle must be at least 1");
    if (!(post_knee_acceleration >= 0.0)) bad("post-knee acceleration must be non-negative");
    if (!(voltage_start > voltage_end)) bad("voltage must fall from start to end");
    if (base_cycle_length < 2) bad("base cycle length must be at least 2");
    if (!(noise_sigma >= 0.0)) bad("noise sigma must be non-negative");
    if (cycle_count < 1) bad("cycle count must be at least 1");
    if (!(length_soh_coupling > 0.0 && length_soh_coupling <= 1.0))
        bad("length-SOH coupling must be in (0, 1]");
    if (!std::isfinite(stage1_fade_per_cycle) || !std::isfinite(post_knee_acceleration) ||
        !std::isfinite(voltage_start) || !std::isfinite(voltage_end) || !std::isfinite(noise_sigma))
        bad("spec fields must be finite");
}

SynthBattery generate_battery(const SynthSpec& spec, double eol_threshold) {
    spec.validate();

    SynthBattery battery;
    battery.soh.nominal_capacity = spec.nominal_capacity;
    battery.soh.values.reserve(spec.cycle_count);

    for (std::size_t s = 1; s <= spec.cycle_count; ++s) {
        const double over = std::max(0.0, double(s) - double(spec.knee_cycle));
        const double q = 1.0 - spec.stage1_fade_per_cycle * double(s - 1) -
                         spec.post_knee_acceleration * over * over;
        battery.soh.values.push_back(std::max(q, kSohFloor));
    }

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    std::uniform_int_distribution<std::int64_t> length_jitter(-1, 1);

    battery.cycles.reserve(spec.cycle_count);
    for (std::size_t s = 1; s <= spec.cycle_count; ++s) {
        const double q = battery.soh.values[s - 1];
        // Weaker cells empty sooner: the curve is sampled on fewer steps, with
        // the coupling knob setting how much of the capacity loss shows up as
        // lost runtime. Under measurement noise the count also rattles by a
        // sample around the trend (lengths non-increasing in expectation
        // only), so the quantization boundaries of the trend read as noise
        // downstream, not as one-off regime changes. The first cycle is
        // exempt: it is the healthy baseline other cycles are warped against,
        // and batteries sharing a base length must share its exact sample count.
        const double shrink = spec.length_soh_coupling * q + (1.0 - spec.length_soh_coupling);
        auto steps = std::max<std::int64_t>(
            2, std::llround(double(spec.base_cycle_length) * shrink) +
                   (spec.noise_sigma > 0.0 && s > 1 ? length_jitter(rng) : 0));
        // Shape distortion grows as health is lost; the warp is monotone so
        // the curve stays a valid discharge trace.
        const double amp = kWarpGain * (1.0 - q);

        DischargeCycle cycle;
        cycle.cycle_number = static_cast<CycleNumber>(s);
        cycle.samples.reserve(static_cast<std::size_t>(steps));
        for (std::int64_t i = 1; i <= steps; ++i) {
            const double tau = double(i - 1) / double(steps - 1);
            const double warped = tau + amp * tau * (1.0 - tau);
            double v = base_voltage(spec, warped);
            if (spec.noise_sigma > 0.0) v += noise(rng);
            v = std::clamp(v, VoltageWindow{}.lo, VoltageWindow{}.hi);
            cycle.samples.push_back({i, v});
        }
        battery.cycles.push_back(std::move(cycle));
    }

    if (spec.post_knee_acceleration > 0.0 &&
        spec.knee_cycle < static_cast<CycleNumber>(spec.cycle_count))
        battery.knee_truth = spec.knee_cycle;
    for (std::size_t s = 1; s <= spec.cycle_count; ++s) {
        if (battery.soh.values[s - 1] < eol_threshold) {
            battery.eol_truth = static_cast<CycleNumber>(s);
            break;
        }
    }
    return battery;
}

std::optional<CycleNumber> label_knee(const SOHSeries& soh, double alpha) {
    if (soh.size() < 3)
        fail(Errc::too_short, "knee labeling needs at least 3 cycles, got " + std::to_string(soh.size()));
    for (std::size_t v = 3; v <= soh.size(); ++v) {
        const double previous_drop = soh.values[v - 3] - soh.values[v - 2];
        const double current_drop = soh.values[v - 2] - soh.values[v - 1];
        if (previous_drop < alpha && current_drop >= alpha) return static_cast<CycleNumber>(v);
    }
    return std::nullopt;
}

CycleNumber label_eol(const SOHSeries& soh, double threshold) {
    for (std::size_t c = 1; c <= soh.size(); ++c)
        if (soh.values[c - 1] < threshold) return static_cast<CycleNumber>(c);
    fail(Errc::never_reached, "SOH never falls below " + std::to_string(threshold));
}

} // namespace kneespot
