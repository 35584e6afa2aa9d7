#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "kneespot/dtw.hpp"
#include "kneespot/matrix_profile.hpp"
#include "kneespot/types.hpp"

namespace kneespot {

/// Knee-onset detector settings. The warm-up length K must exceed twice the
/// cycle lag f so the control limit is built from a meaningful sample.
struct DetectorConfig {
    std::size_t warmup_cycles = 110;     // K
    std::size_t cycle_lag = 10;          // f
    double ucl_sigma_multiplier = 1.5;

    // Experimentation switches; the defaults are the intended behavior.
    Normalization normalization = Normalization::none;
    DownsampleMode downsample = DownsampleMode::cycle_start;

    void validate() const;
};

/// Outcome of feeding one cycle to the detector.
struct Verdict {
    enum class Kind { warming, no_change, candidate, knee_onset };
    Kind kind = Kind::no_change;
    CycleNumber cycle = 0; // candidate or knee-onset cycle; 0 otherwise

    friend bool operator==(const Verdict&, const Verdict&) = default;
};

/// Upper control limit over the warm-up cycle profile: mean + multiplier *
/// population standard deviation, skipping the first entry.
double compute_ucl(const CycleProfile& profile, double sigma_multiplier = 1.5);

/// Per-battery online knee-onset detector.
///
/// Feed discharge cycles in order, starting from cycle 1. The first K cycles
/// build the synchronized series, the cycle profile, and the control limit
/// (verdict: warming). Afterwards each new cycle s is aligned, appended, the
/// profile refreshed, and every decision re-made on that freshest profile:
///   - a cycle c becomes a candidate when its profile value exceeds the UCL
///     and the index switches direction at c (the previous entry pointing
///     back while c points forward, or c pointing back while c+1 points
///     forward). An entry can only point forward once windows beyond it
///     exist, so the switch matures a few cycles after c itself; each step
///     therefore re-examines the cycles in [s - 2f, s - f], the span whose
///     verdict could still be delivered in time. Candidates are always past
///     the warm-up window, whose cycles are trusted knee-free.
///   - confirmation vets the f entries after the candidate: all must point to
///     cycles >= c - 1 on the freshest profile. One backward-pointing entry
///     aborts, and the detector resumes scanning within the same step.
///   - once entry c + f has been vetted the knee onset is declared, exactly
///     at cycle c + 2f, the terminal state.
class KneeDetector {
public:
    enum class Phase { warming_up, monitoring, confirming, finished };

    explicit KneeDetector(DetectorConfig cfg = {});

    /// Builds a detector already past warm-up from exactly K cycles.
    static KneeDetector warm_up(const std::vector<DischargeCycle>& cycles, DetectorConfig cfg = {});

    /// Processes the next cycle (numbering must be contiguous from 1).
    Verdict step(const DischargeCycle& cycle);

    Phase phase() const { return phase_; }
    const DetectorConfig& config() const { return cfg_; }
    CycleNumber last_cycle() const { return last_cycle_; }

    /// Control limit; meaningful once warm-up has completed.
    double ucl() const;
    /// Freshest cycle-granularity profile view.
    const CycleProfile& profile() const;
    /// Candidate under confirmation, if any.
    std::optional<CycleNumber> candidate() const;
    /// Identified knee-onset cycle, once terminal.
    std::optional<CycleNumber> knee_onset() const { return knee_; }
    /// Cycle length d fixed by the reference (first) cycle; 0 before cycle 1.
    std::size_t cycle_length() const { return reference_ ? reference_->d() : 0; }

private:
    Verdict scan_for_candidate(CycleNumber s);
    bool confirmation_holds(CycleNumber c, CycleNumber s) const;
    void refresh_profile();
    void append_synchronized(const SynchronizedCycle& sync);

    DetectorConfig cfg_;
    Phase phase_ = Phase::warming_up;
    std::optional<ReferenceCycle> reference_;
    DischargeSeries series_;                   // warm-up accumulation, then source of truth for z mode
    std::optional<StreamingProfile> streaming_; // plain-distance incremental path
    CycleProfile profile_;
    double ucl_ = 0.0;
    CycleNumber last_cycle_ = 0;
    CycleNumber candidate_ = 0;
    std::optional<CycleNumber> knee_;
};

} // namespace kneespot
