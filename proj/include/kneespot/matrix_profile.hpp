#pragma once

#include <cstdint>
#include <cstddef>
#include <vector>

#include "kneespot/types.hpp"

namespace kneespot {

/// Distance treatment for subsequence comparison. Plain Euclidean distance is
/// the default: the synchronized-index trajectories carry absolute level
/// information that z-scoring would erase. The z-score mode exists for
/// experimentation only.
enum class Normalization { none, z_score };

/// Matrix profile and profile index of one series under query length m.
/// index is 1-based; every entry respects the exclusion zone, and
/// profile[j] always equals subsequence_distance(T, j, index[j], m) exactly.
struct ProfilePair {
    std::vector<double> profile;
    std::vector<std::int64_t> index;
    std::size_t query_length = 0;     // m
    std::size_t exclusion_radius = 0; // ceil(m/2), inclusive comparison
    Normalization normalization = Normalization::none;

    std::size_t size() const { return profile.size(); }
};

/// Where the per-cycle sample is taken from the sample-level profile.
/// cycle_start reads the subsequence beginning exactly at each cycle
/// (sample (c-1)*d + 1); literal reads samples d, 2d, ... as written.
enum class DownsampleMode { cycle_start, literal };

/// Cycle-granularity view of a ProfilePair: one value and one neighbor
/// (in whole-cycle units) per cycle c = 1..K-f.
struct CycleProfile {
    std::vector<double> values;
    std::vector<std::int64_t> indices; // cycle units, in [1, K]
    std::size_t cycle_lag = 0;         // f

    std::size_t size() const { return values.size(); }
    // 1-based accessors, matching the cycle numbering convention.
    double value_at(std::size_t c) const { return values.at(c - 1); }
    std::int64_t index_at(std::size_t c) const { return indices.at(c - 1); }
};

inline std::size_t exclusion_radius_for(std::size_t m) { return (m + 1) / 2; }

/// Euclidean distance between the length-m subsequences starting at 1-based
/// positions j and q.
double subsequence_distance(const std::vector<double>& series, std::size_t j, std::size_t q,
                            std::size_t m, Normalization normalization = Normalization::none);

/// Reference implementation: scans every admissible pair. Ties in the argmin
/// go to the smallest q.
ProfilePair compute_profile(const std::vector<double>& series, std::size_t m,
                            Normalization normalization = Normalization::none);

/// Same contract as compute_profile, via running sums along diagonals.
/// Ties resolve toward the smallest q at equal stored distance; near-ties
/// within floating-point noise of each other may pick either side.
ProfilePair compute_profile_fast(const std::vector<double>& series, std::size_t m,
                                 Normalization normalization = Normalization::none);

/// Extends the profile by one cycle of the series. Existing entries are
/// updated whenever the appended region supplies a closer neighbor; the result
/// matches recomputing from scratch.
ProfilePair append_cycle(const ProfilePair& pair, const std::vector<double>& series,
                         const SynchronizedCycle& new_cycle);

/// Downsamples a sample-level profile over K complete cycles of length d to
/// cycle granularity. Requires m == d * f.
CycleProfile cycle_downsample(const ProfilePair& pair, std::size_t d, std::size_t f,
                              DownsampleMode mode = DownsampleMode::cycle_start);

/// Incrementally maintained matrix profile over a growing cycle-aligned
/// series (plain distance only). append() costs O(d * n) rather than a full
/// recompute; results match compute_profile on the extended series.
class StreamingProfile {
public:
    /// Computes the profile of the initial series (must hold whole cycles).
    StreamingProfile(std::vector<double> series, std::size_t cycle_length, std::size_t m);

    /// Resumes from an already-computed pair instead of recomputing.
    StreamingProfile(std::vector<double> series, std::size_t cycle_length, const ProfilePair& pair);

    void append(const SynchronizedCycle& cycle);
    void append(const std::vector<double>& values);

    const std::vector<double>& series() const { return series_; }
    std::size_t cycle_length() const { return d_; }
    std::size_t cycle_count() const { return series_.size() / d_; }
    std::size_t query_length() const { return m_; }

    const std::vector<double>& profile() const { return profile_; }
    const std::vector<std::int64_t>& index() const { return index_; }

    ProfilePair snapshot() const;
    CycleProfile cycle_profile(DownsampleMode mode = DownsampleMode::cycle_start) const;

private:
    void init_dots();
    void update_pair(std::size_t p, std::size_t q, double d2);

    std::vector<double> series_;
    std::size_t d_ = 0;
    std::size_t m_ = 0;
    std::size_t radius_ = 0;
    std::vector<double> profile_;
    std::vector<std::int64_t> index_;
    std::vector<double> prefix_sq_;     // prefix_sq_[i] = sum of series[0..i)^2
    std::vector<double> last_row_dots_; // dot(T_last, T_q) for the last subsequence row
};

} // namespace kneespot
