#include "kneespot/dtw.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace kneespot {

namespace {

inline double local_cost(const DischargeCycle& a, std::size_t i, const DischargeCycle& b, std::size_t j) {
    return std::abs(a.samples[i].voltage - b.samples[j].voltage);
}

} // namespace

WarpingPath dtw_align(const ReferenceCycle& reference, const DischargeCycle& cycle) {
    const std::size_t d = reference.d();
    const std::size_t t = cycle.length();
    if (d == 0) fail(Errc::empty_cycle, "reference cycle has no samples");
    if (t == 0) fail(Errc::empty_cycle, "cycle " + std::to_string(cycle.cycle_number) + " has no samples");

    constexpr double inf = std::numeric_limits<double>::infinity();
    // acc(l, h) = minimal cumulative cost of a path from (1,1) to (l+1, h+1).
    std::vector<double> acc(d * t, inf);
    auto at = [&](std::size_t l, std::size_t h) -> double& { return acc[l * t + h]; };

    at(0, 0) = local_cost(reference.cycle, 0, cycle, 0);
    for (std::size_t h = 1; h < t; ++h) at(0, h) = at(0, h - 1) + local_cost(reference.cycle, 0, cycle, h);
    for (std::size_t l = 1; l < d; ++l) at(l, 0) = at(l - 1, 0) + local_cost(reference.cycle, l, cycle, 0);
    for (std::size_t l = 1; l < d; ++l) {
        const double vr = reference.cycle.samples[l].voltage;
        const double* prev = &acc[(l - 1) * t];
        double* cur = &acc[l * t];
        for (std::size_t h = 1; h < t; ++h) {
            const double best = std::min({prev[h - 1], prev[h], cur[h - 1]});
            cur[h] = std::abs(vr - cycle.samples[h].voltage) + best;
        }
    }

    WarpingPath path;
    path.total_cost = at(d - 1, t - 1);

    // Backtrack, preferring diagonal, then reference advance, then cycle advance.
    std::size_t l = d - 1, h = t - 1;
    path.pairs.emplace_back(static_cast<std::int64_t>(l + 1), static_cast<std::int64_t>(h + 1));
    while (l > 0 || h > 0) {
        if (l == 0) {
            --h;
        } else if (h == 0) {
            --l;
        } else {
            const double diag = at(l - 1, h - 1);
            const double up = at(l - 1, h);
            const double left = at(l, h - 1);
            const double best = std::min({diag, up, left});
            if (diag == best) {
                --l;
                --h;
            } else if (up == best) {
                --l;
            } else {
                --h;
            }
        }
        path.pairs.emplace_back(static_cast<std::int64_t>(l + 1), static_cast<std::int64_t>(h + 1));
    }
    std::reverse(path.pairs.begin(), path.pairs.end());
    return path;
}

SynchronizedCycle synchronize_cycle(const ReferenceCycle& reference, const DischargeCycle& cycle,
                                    const WarpingPath& path) {
    const std::size_t d = reference.d();
    SynchronizedCycle out;
    out.cycle_number = cycle.cycle_number;
    out.warped_indices.assign(d, 0.0);

    std::vector<bool> covered(d, false);
    for (const auto& [ref_idx, cyc_idx] : path.pairs) {
        if (ref_idx < 1 || static_cast<std::size_t>(ref_idx) > d)
            fail(Errc::path_reference_mismatch,
                 "path pair references position " + std::to_string(ref_idx) + " outside [1, " +
                     std::to_string(d) + "]");
        // Pairs arrive in path order, so the last write per reference index wins.
        out.warped_indices[static_cast<std::size_t>(ref_idx - 1)] = static_cast<double>(cyc_idx);
        covered[static_cast<std::size_t>(ref_idx - 1)] = true;
    }
    for (std::size_t l = 0; l < d; ++l)
        if (!covered[l])
            fail(Errc::path_reference_mismatch,
                 "path does not cover reference position " + std::to_string(l + 1));
    return out;
}

DischargeSeries build_series(const std::vector<DischargeCycle>& cycles, const ReferenceCycle& reference) {
    if (cycles.empty()) fail(Errc::empty_cycle, "no cycles to build a series from");
    DischargeSeries series(reference.d());
    for (const auto& cycle : cycles) {
        try {
            const WarpingPath path = dtw_align(reference, cycle);
            series.append(synchronize_cycle(reference, cycle, path));
        } catch (const Error& e) {
            fail(e.code(), "while aligning cycle " + std::to_string(cycle.cycle_number) + ": " + e.what());
        }
    }
    return series;
}

} // namespace kneespot
