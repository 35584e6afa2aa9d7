#include "kneespot/matrix_profile.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace kneespot {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Re-evaluation band around the current best when comparing approximate
// squared distances from running sums against a stored exact distance.
constexpr double kGuard = 1e-9;

struct SubseqStats {
    std::vector<double> mean;
    std::vector<double> std_dev; // population
};

SubseqStats subsequence_stats(const std::vector<double>& t, std::size_t m) {
    const std::size_t p = t.size() - m + 1;
    SubseqStats s;
    s.mean.resize(p);
    s.std_dev.resize(p);
    std::vector<double> prefix(t.size() + 1, 0.0), prefix_sq(t.size() + 1, 0.0);
    for (std::size_t i = 0; i < t.size(); ++i) {
        prefix[i + 1] = prefix[i] + t[i];
        prefix_sq[i + 1] = prefix_sq[i] + t[i] * t[i];
    }
    const double dm = static_cast<double>(m);
    for (std::size_t j = 0; j < p; ++j) {
        const double sum = prefix[j + m] - prefix[j];
        const double sum_sq = prefix_sq[j + m] - prefix_sq[j];
        s.mean[j] = sum / dm;
        const double var = std::max(0.0, sum_sq / dm - s.mean[j] * s.mean[j]);
        s.std_dev[j] = std::sqrt(var);
    }
    return s;
}

double plain_distance(const std::vector<double>& t, std::size_t j0, std::size_t q0, std::size_t m) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double diff = t[j0 + i] - t[q0 + i];
        acc += diff * diff;
    }
    return std::sqrt(acc);
}

// Both subsequences z-scored with population sigma; a flat subsequence maps
// to the zero vector.
double z_distance(const std::vector<double>& t, std::size_t j0, std::size_t q0, std::size_t m,
                  const SubseqStats& stats) {
    const double mj = stats.mean[j0], sj = stats.std_dev[j0];
    const double mq = stats.mean[q0], sq = stats.std_dev[q0];
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double za = sj > 0.0 ? (t[j0 + i] - mj) / sj : 0.0;
        const double zb = sq > 0.0 ? (t[q0 + i] - mq) / sq : 0.0;
        const double diff = za - zb;
        acc += diff * diff;
    }
    return std::sqrt(acc);
}

void check_profile_inputs(const std::vector<double>& series, std::size_t m) {
    if (m < 1) fail(Errc::out_of_range, "query length must be at least 1");
    if (series.size() < 2 * m)
        fail(Errc::series_too_short, "series of length " + std::to_string(series.size()) +
                                         " is shorter than 2m = " + std::to_string(2 * m));
}

} // namespace

double subsequence_distance(const std::vector<double>& series, std::size_t j, std::size_t q,
                            std::size_t m, Normalization normalization) {
    if (m < 1) fail(Errc::out_of_range, "query length must be at least 1");
    const std::size_t p = series.size() >= m ? series.size() - m + 1 : 0;
    if (j < 1 || j > p || q < 1 || q > p)
        fail(Errc::out_of_range, "subsequence positions (" + std::to_string(j) + ", " + std::to_string(q) +
                                     ") outside [1, " + std::to_string(p) + "]");
    if (normalization == Normalization::none) return plain_distance(series, j - 1, q - 1, m);
    const SubseqStats stats = subsequence_stats(series, m);
    return z_distance(series, j - 1, q - 1, m, stats);
}

ProfilePair compute_profile(const std::vector<double>& series, std::size_t m, Normalization normalization) {
    check_profile_inputs(series, m);
    const std::size_t p = series.size() - m + 1;
    const std::size_t radius = exclusion_radius_for(m);

    SubseqStats stats;
    if (normalization == Normalization::z_score) stats = subsequence_stats(series, m);

    ProfilePair out;
    out.query_length = m;
    out.exclusion_radius = radius;
    out.normalization = normalization;
    out.profile.assign(p, kInf);
    out.index.assign(p, 0);

    for (std::size_t j = 0; j < p; ++j) {
        double best = kInf;
        std::size_t best_q = 0;
        for (std::size_t q = 0; q < p; ++q) {
            const std::size_t gap = j > q ? j - q : q - j;
            if (gap < radius) continue;
            const double dist = normalization == Normalization::none
                                    ? plain_distance(series, j, q, m)
                                    : z_distance(series, j, q, m, stats);
            if (dist < best) {
                best = dist;
                best_q = q;
            }
        }
        out.profile[j] = best;
        out.index[j] = static_cast<std::int64_t>(best_q + 1);
    }
    return out;
}

ProfilePair compute_profile_fast(const std::vector<double>& series, std::size_t m,
                                 Normalization normalization) {
    check_profile_inputs(series, m);
    const std::size_t p = series.size() - m + 1;
    const std::size_t radius = exclusion_radius_for(m);
    const std::vector<double>& t = series;

    std::vector<double> best_d2(p, kInf);
    std::vector<std::size_t> best_q(p, 0);
    auto offer = [&](std::size_t j, std::size_t q, double d2) {
        if (d2 < best_d2[j] || (d2 == best_d2[j] && q < best_q[j])) {
            best_d2[j] = d2;
            best_q[j] = q;
        }
    };

    if (normalization == Normalization::none) {
        for (std::size_t lag = radius; lag < p; ++lag) {
            double window = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                const double diff = t[i] - t[lag + i];
                window += diff * diff;
            }
            offer(0, lag, window);
            offer(lag, 0, window);
            for (std::size_t j = 1; j + lag < p; ++j) {
                const double leaving = t[j - 1] - t[j + lag - 1];
                const double entering = t[j + m - 1] - t[j + lag + m - 1];
                window += entering * entering - leaving * leaving;
                const double d2 = std::max(window, 0.0);
                offer(j, j + lag, d2);
                offer(j + lag, j, d2);
            }
        }
        ProfilePair out;
        out.query_length = m;
        out.exclusion_radius = radius;
        out.normalization = normalization;
        out.profile.resize(p);
        out.index.resize(p);
        for (std::size_t j = 0; j < p; ++j) {
            out.profile[j] = plain_distance(series, j, best_q[j], m);
            out.index[j] = static_cast<std::int64_t>(best_q[j] + 1);
        }
        return out;
    }

    const SubseqStats stats = subsequence_stats(series, m);
    const double dm = static_cast<double>(m);
    for (std::size_t lag = radius; lag < p; ++lag) {
        double dot = 0.0;
        for (std::size_t i = 0; i < m; ++i) dot += t[i] * t[lag + i];
        for (std::size_t j = 0; j + lag < p; ++j) {
            if (j > 0) dot += t[j + m - 1] * t[j + lag + m - 1] - t[j - 1] * t[j + lag - 1];
            const std::size_t q = j + lag;
            const double sj = stats.std_dev[j], sq = stats.std_dev[q];
            double d2;
            if (sj > 0.0 && sq > 0.0) {
                const double cross = (dot - dm * stats.mean[j] * stats.mean[q]) / (sj * sq);
                d2 = std::max(0.0, 2.0 * (dm - cross));
            } else if (sj == 0.0 && sq == 0.0) {
                d2 = 0.0;
            } else {
                d2 = dm;
            }
            offer(j, q, d2);
            offer(q, j, d2);
        }
    }
    ProfilePair out;
    out.query_length = m;
    out.exclusion_radius = radius;
    out.normalization = normalization;
    out.profile.resize(p);
    out.index.resize(p);
    for (std::size_t j = 0; j < p; ++j) {
        out.profile[j] = z_distance(series, j, best_q[j], m, stats);
        out.index[j] = static_cast<std::int64_t>(best_q[j] + 1);
    }
    return out;
}

CycleProfile cycle_downsample(const ProfilePair& pair, std::size_t d, std::size_t f,
                              DownsampleMode mode) {
    if (d < 1 || f < 1) fail(Errc::out_of_range, "cycle length and lag must be positive");
    if (pair.query_length != d * f)
        fail(Errc::query_not_cycle_aligned, "query length " + std::to_string(pair.query_length) +
                                                " is not d*f = " + std::to_string(d * f));
    const std::size_t n = pair.size() + pair.query_length - 1;
    if (n % d != 0)
        fail(Errc::cycle_length_mismatch,
             "series length " + std::to_string(n) + " does not hold whole cycles of " + std::to_string(d));

    const std::size_t cycles = n / d;
    const std::size_t count = cycles > f ? cycles - f : 0;
    CycleProfile out;
    out.cycle_lag = f;
    out.values.reserve(count);
    out.indices.reserve(count);
    for (std::size_t c = 1; c <= count; ++c) {
        const std::size_t pos = mode == DownsampleMode::cycle_start ? (c - 1) * d : c * d - 1;
        out.values.push_back(pair.profile[pos]);
        const std::int64_t sample_index = pair.index[pos];
        out.indices.push_back((sample_index - 1) / static_cast<std::int64_t>(d) + 1);
    }
    return out;
}

StreamingProfile::StreamingProfile(std::vector<double> series, std::size_t cycle_length, std::size_t m)
    : series_(std::move(series)), d_(cycle_length), m_(m), radius_(exclusion_radius_for(m)) {
    if (d_ < 1) fail(Errc::out_of_range, "cycle length must be positive");
    if (series_.size() % d_ != 0)
        fail(Errc::cycle_length_mismatch, "initial series does not hold whole cycles");
    check_profile_inputs(series_, m_);
    ProfilePair pair = compute_profile_fast(series_, m_);
    profile_ = std::move(pair.profile);
    index_ = std::move(pair.index);
    init_dots();
}

StreamingProfile::StreamingProfile(std::vector<double> series, std::size_t cycle_length,
                                   const ProfilePair& pair)
    : series_(std::move(series)), d_(cycle_length), m_(pair.query_length),
      radius_(pair.exclusion_radius) {
    if (d_ < 1) fail(Errc::out_of_range, "cycle length must be positive");
    if (series_.size() % d_ != 0)
        fail(Errc::cycle_length_mismatch, "initial series does not hold whole cycles");
    check_profile_inputs(series_, m_);
    if (pair.normalization != Normalization::none)
        fail(Errc::dimension_mismatch, "streaming profile supports plain distance only");
    if (pair.size() != series_.size() - m_ + 1)
        fail(Errc::dimension_mismatch, "profile pair does not match the series length");
    profile_ = pair.profile;
    index_ = pair.index;
    init_dots();
}

void StreamingProfile::init_dots() {
    prefix_sq_.resize(series_.size() + 1);
    prefix_sq_[0] = 0.0;
    for (std::size_t i = 0; i < series_.size(); ++i)
        prefix_sq_[i + 1] = prefix_sq_[i] + series_[i] * series_[i];

    // Dots of the last subsequence row against every position, the seed for
    // the per-append diagonal recurrence. Exact when the series is
    // integer-valued, which warped-index trajectories always are.
    const std::size_t last = series_.size() - m_;
    last_row_dots_.assign(last + 1, 0.0);
    for (std::size_t q = 0; q <= last; ++q) {
        double dot = 0.0;
        for (std::size_t i = 0; i < m_; ++i) dot += series_[last + i] * series_[q + i];
        last_row_dots_[q] = dot;
    }
}

void StreamingProfile::update_pair(std::size_t j, std::size_t q, double d2) {
    const double current = profile_[j];
    if (current == 0.0) return; // zero is unbeatable and ties keep the earlier index
    const double threshold = current * current;
    if (d2 >= threshold + kGuard * (1.0 + threshold)) return;
    const double exact = plain_distance(series_, j, q, m_);
    const auto q1 = static_cast<std::int64_t>(q + 1);
    if (exact < current || (exact == current && q1 < index_[j])) {
        profile_[j] = exact;
        index_[j] = q1;
    }
}

void StreamingProfile::append(const SynchronizedCycle& cycle) { append(cycle.warped_indices); }

void StreamingProfile::append(const std::vector<double>& values) {
    if (values.size() != d_)
        fail(Errc::cycle_length_mismatch, "appended cycle has length " + std::to_string(values.size()) +
                                              ", series cycle length is " + std::to_string(d_));
    const std::size_t p_old = series_.size() - m_ + 1;
    series_.insert(series_.end(), values.begin(), values.end());
    prefix_sq_.reserve(series_.size() + 1);
    for (double v : values) prefix_sq_.push_back(prefix_sq_.back() + v * v);

    const std::size_t p_new = series_.size() - m_ + 1;
    profile_.resize(p_new, kInf);
    index_.resize(p_new, 0);
    last_row_dots_.resize(p_new, 0.0);

    const std::vector<double>& t = series_;
    auto window_sq = [&](std::size_t pos) { return prefix_sq_[pos + m_] - prefix_sq_[pos]; };

    for (std::size_t p = p_old; p < p_new; ++p) {
        // Derive this row's dots from the previous row in place (descending q
        // so each read of q-1 still sees the previous row).
        for (std::size_t q = p; q >= 1; --q)
            last_row_dots_[q] = last_row_dots_[q - 1] - t[p - 1] * t[q - 1] + t[p + m_ - 1] * t[q + m_ - 1];
        double dot0 = 0.0;
        for (std::size_t i = 0; i < m_; ++i) dot0 += t[p + i] * t[i];
        last_row_dots_[0] = dot0;

        const double ssq_p = window_sq(p);
        for (std::size_t q = 0; q + radius_ <= p; ++q) {
            const double d2 = std::max(0.0, ssq_p + window_sq(q) - 2.0 * last_row_dots_[q]);
            update_pair(p, q, d2);
            update_pair(q, p, d2);
        }
        if (!(profile_[p] < kInf))
            fail(Errc::series_too_short, "no admissible neighbor for appended position");
    }
}

ProfilePair StreamingProfile::snapshot() const {
    ProfilePair out;
    out.profile = profile_;
    out.index = index_;
    out.query_length = m_;
    out.exclusion_radius = radius_;
    out.normalization = Normalization::none;
    return out;
}

CycleProfile StreamingProfile::cycle_profile(DownsampleMode mode) const {
    if (m_ % d_ != 0)
        fail(Errc::query_not_cycle_aligned, "query length is not a whole number of cycles");
    const std::size_t f = m_ / d_;
    const std::size_t cycles = series_.size() / d_;
    CycleProfile out;
    out.cycle_lag = f;
    const std::size_t count = cycles > f ? cycles - f : 0;
    out.values.reserve(count);
    out.indices.reserve(count);
    for (std::size_t c = 1; c <= count; ++c) {
        const std::size_t pos = mode == DownsampleMode::cycle_start ? (c - 1) * d_ : c * d_ - 1;
        out.values.push_back(profile_[pos]);
        out.indices.push_back((index_[pos] - 1) / static_cast<std::int64_t>(d_) + 1);
    }
    return out;
}

ProfilePair append_cycle(const ProfilePair& pair, const std::vector<double>& series,
                         const SynchronizedCycle& new_cycle) {
    const std::size_t d = new_cycle.length();
    if (d == 0) fail(Errc::cycle_length_mismatch, "appended cycle is empty");
    if (series.size() % d != 0)
        fail(Errc::cycle_length_mismatch, "appended cycle length " + std::to_string(d) +
                                              " does not divide the series length " +
                                              std::to_string(series.size()));
    if (pair.normalization == Normalization::z_score) {
        std::vector<double> extended = series;
        extended.insert(extended.end(), new_cycle.warped_indices.begin(), new_cycle.warped_indices.end());
        return compute_profile_fast(extended, pair.query_length, Normalization::z_score);
    }
    StreamingProfile streaming(series, d, pair);
    streaming.append(new_cycle);
    return streaming.snapshot();
}

} // namespace kneespot
