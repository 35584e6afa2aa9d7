#include "kneespot/detector.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace kneespot {

void DetectorConfig::validate() const {
    if (cycle_lag < 1) fail(Errc::out_of_range, "cycle lag must be at least 1");
    if (warmup_cycles <= 2 * cycle_lag)
        fail(Errc::out_of_range, "warm-up length " + std::to_string(warmup_cycles) +
                                     " must exceed twice the cycle lag " + std::to_string(cycle_lag));
    if (!(ucl_sigma_multiplier >= 0.0))
        fail(Errc::out_of_range, "sigma multiplier must be non-negative");
}

double compute_ucl(const CycleProfile& profile, double sigma_multiplier) {
    if (profile.size() < 2)
        fail(Errc::too_few_entries, "control limit needs at least 2 profile entries, got " +
                                        std::to_string(profile.size()));
    // The first entry is skipped: its window starts at the reference cycle
    // itself, which the limit should not be anchored to.
    const std::size_t count = profile.size() - 1;
    double mean = 0.0;
    for (std::size_t j = 1; j < profile.size(); ++j) mean += profile.values[j];
    mean /= double(count);
    double var = 0.0;
    for (std::size_t j = 1; j < profile.size(); ++j) {
        const double dev = profile.values[j] - mean;
        var += dev * dev;
    }
    var /= double(count); // population form
    return mean + sigma_multiplier * std::sqrt(var);
}

KneeDetector::KneeDetector(DetectorConfig cfg) : cfg_(cfg) { cfg_.validate(); }

KneeDetector KneeDetector::warm_up(const std::vector<DischargeCycle>& cycles, DetectorConfig cfg) {
    cfg.validate();
    if (cycles.size() != cfg.warmup_cycles)
        fail(Errc::too_few_entries, "warm-up takes exactly " + std::to_string(cfg.warmup_cycles) +
                                        " cycles, got " + std::to_string(cycles.size()));
    KneeDetector detector(cfg);
    for (const DischargeCycle& cycle : cycles) detector.step(cycle);
    return detector;
}

double KneeDetector::ucl() const {
    if (phase_ == Phase::warming_up)
        fail(Errc::too_few_entries, "control limit not established until warm-up completes");
    return ucl_;
}

const CycleProfile& KneeDetector::profile() const {
    if (phase_ == Phase::warming_up)
        fail(Errc::too_few_entries, "no profile until warm-up completes");
    return profile_;
}

std::optional<CycleNumber> KneeDetector::candidate() const {
    if (candidate_ == 0) return std::nullopt;
    return candidate_;
}

void KneeDetector::append_synchronized(const SynchronizedCycle& sync) {
    if (streaming_) {
        streaming_->append(sync);
    } else {
        series_.append(sync);
    }
}

void KneeDetector::refresh_profile() {
    if (streaming_) {
        profile_ = streaming_->cycle_profile(cfg_.downsample);
    } else {
        const std::size_t d = reference_->d();
        const std::size_t m = d * cfg_.cycle_lag;
        const ProfilePair pair = compute_profile_fast(series_.samples(), m, cfg_.normalization);
        profile_ = cycle_downsample(pair, d, cfg_.cycle_lag, cfg_.downsample);
    }
}

Verdict KneeDetector::step(const DischargeCycle& cycle) {
    if (phase_ == Phase::finished)
        fail(Errc::detector_finished, "knee onset already identified at cycle " +
                                          std::to_string(*knee_) + "; detector is terminal");
    if (cycle.cycle_number != last_cycle_ + 1)
        fail(Errc::non_contiguous_cycles, "expected cycle " + std::to_string(last_cycle_ + 1) +
                                              ", got " + std::to_string(cycle.cycle_number));
    last_cycle_ = cycle.cycle_number;

    if (!reference_) reference_ = ReferenceCycle{cycle};
    const WarpingPath path = dtw_align(*reference_, cycle);
    const SynchronizedCycle sync = synchronize_cycle(*reference_, cycle, path);

    if (phase_ == Phase::warming_up) {
        series_.append(sync);
        if (series_.cycle_count() == cfg_.warmup_cycles) {
            const std::size_t d = reference_->d();
            const std::size_t m = d * cfg_.cycle_lag;
            if (cfg_.normalization == Normalization::none) {
                streaming_.emplace(series_.samples(), d, m);
            }
            refresh_profile();
            ucl_ = compute_ucl(profile_, cfg_.ucl_sigma_multiplier);
            phase_ = Phase::monitoring;
        }
        return {Verdict::Kind::warming, 0};
    }

    append_synchronized(sync);
    refresh_profile();

    const CycleNumber s = cycle.cycle_number;
    const auto f = static_cast<CycleNumber>(cfg_.cycle_lag);
    if (phase_ == Phase::confirming) {
        if (!confirmation_holds(candidate_, s)) {
            // Some vetted cycle turned back toward the old regime: drop the
            // candidate and resume scanning within this same step.
            candidate_ = 0;
            phase_ = Phase::monitoring;
        } else if (s - f >= candidate_ + f) {
            // All f entries past the candidate have been vetted.
            knee_ = candidate_;
            phase_ = Phase::finished;
            return {Verdict::Kind::knee_onset, *knee_};
        } else {
            return {Verdict::Kind::no_change, 0};
        }
    }

    return scan_for_candidate(s);
}

// True while every profile entry in (c, c+f] computed so far still points at
// or beyond the cycle before the candidate. Entries are re-read from the
// freshest profile, so a retroactive switch back counts against the candidate.
bool KneeDetector::confirmation_holds(CycleNumber c, CycleNumber s) const {
    const auto f = static_cast<CycleNumber>(cfg_.cycle_lag);
    const CycleNumber newest = s - f;
    const CycleNumber last = std::min(c + f, newest);
    for (CycleNumber e = c + 1; e <= last; ++e)
        if (profile_.index_at(static_cast<std::size_t>(e)) < c - 1) return false;
    return true;
}

Verdict KneeDetector::scan_for_candidate(CycleNumber s) {
    const auto f = static_cast<CycleNumber>(cfg_.cycle_lag);
    const auto K = static_cast<CycleNumber>(cfg_.warmup_cycles);

    // An entry can only point forward once windows beyond it exist, which is
    // several cycles after the entry itself appears. Each step therefore
    // re-examines recent cycles on the freshest profile. The span is capped
    // below at s - 2f: a confirmation finishing later than c + 2f would be
    // stale, so older cycles can no longer be delivered anyway.
    const CycleNumber newest = s - f;
    CycleNumber c = std::max(K + 1, s - 2 * f);
    for (; c <= newest; ++c) {
        if (!(profile_.value_at(static_cast<std::size_t>(c)) > ucl_)) continue;
        const std::int64_t here = profile_.index_at(static_cast<std::size_t>(c));
        // Index switch: the profile stops matching the past right at c.
        const bool switch_at_c =
            here >= c && profile_.index_at(static_cast<std::size_t>(c - 1)) < c - 1;
        const bool switch_after_c =
            here < c && c + 1 <= newest &&
            profile_.index_at(static_cast<std::size_t>(c + 1)) >= c + 1;
        if (!switch_at_c && !switch_after_c) continue;
        if (!confirmation_holds(c, s)) continue; // stillborn candidate
        candidate_ = c;
        if (newest >= c + f) {
            // The whole confirmation window is already present and clean.
            knee_ = candidate_;
            phase_ = Phase::finished;
            return {Verdict::Kind::knee_onset, *knee_};
        }
        phase_ = Phase::confirming;
        return {Verdict::Kind::candidate, candidate_};
    }

    return {Verdict::Kind::no_change, 0};
}

} // namespace kneespot
