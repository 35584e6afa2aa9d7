#pragma once

#include <cstddef>
#include <vector>

#include "kneespot/types.hpp"

namespace kneespot {

/// Minimum-cost alignment between a reference cycle and one discharge cycle.
/// Pairs are 1-based (reference position, cycle position); the path starts at
/// (1,1), ends at (d,t), and both coordinates advance by at most one per step.
struct WarpingPath {
    std::vector<std::pair<std::int64_t, std::int64_t>> pairs;
    double total_cost = 0.0;

    friend bool operator==(const WarpingPath&, const WarpingPath&) = default;
};

/// Dynamic-programming alignment under local cost |v_r - v_k| with steps
/// {(1,0),(0,1),(1,1)}. Ties prefer the diagonal, then the reference advance,
/// so identical inputs always give identical paths.
WarpingPath dtw_align(const ReferenceCycle& reference, const DischargeCycle& cycle);

/// Collapses a warping path to the fixed-length warped time-index trajectory:
/// for each reference position l, the LAST cycle position matched to l.
/// Aligning the reference against itself yields the identity [1, 2, ..., d].
SynchronizedCycle synchronize_cycle(const ReferenceCycle& reference, const DischargeCycle& cycle,
                                    const WarpingPath& path);

/// Aligns and synchronizes every cycle against the reference, concatenating
/// the warped trajectories into one flat series of length d * K.
DischargeSeries build_series(const std::vector<DischargeCycle>& cycles, const ReferenceCycle& reference);

} // namespace kneespot
