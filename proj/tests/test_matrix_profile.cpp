#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "kneespot/matrix_profile.hpp"

using namespace kneespot;

namespace {

struct BruteResult {
    std::vector<double> profile;
    std::vector<std::int64_t> index;
};

// Independent oracle: direct double loop over all admissible pairs with its
// own distance accumulation. O(n^2 m), no shared code with the library.
BruteResult brute_profile(const std::vector<double>& t, std::size_t m) {
    const std::size_t p = t.size() - m + 1;
    const std::size_t radius = (m + 1) / 2; // ceil(m/2)
    BruteResult out;
    out.profile.assign(p, std::numeric_limits<double>::infinity());
    out.index.assign(p, 0);
    for (std::size_t j = 0; j < p; ++j) {
        for (std::size_t q = 0; q < p; ++q) {
            const std::size_t gap = j > q ? j - q : q - j;
            if (gap < radius) continue;
            double acc = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                const double diff = t[j + i] - t[q + i];
                acc += diff * diff;
            }
            const double dist = std::sqrt(acc);
            if (dist < out.profile[j]) {
                out.profile[j] = dist;
                out.index[j] = static_cast<std::int64_t>(q + 1);
            }
        }
    }
    return out;
}

std::vector<double> random_series(std::mt19937& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> t(n);
    for (auto& x : t) x = dist(rng);
    return t;
}

// Integer-valued series mimic warped time-index trajectories, where every
// intermediate quantity in the fast paths stays exact.
std::vector<double> random_integer_series(std::mt19937& rng, std::size_t n, int lo, int hi) {
    std::uniform_int_distribution<int> dist(lo, hi);
    std::vector<double> t(n);
    for (auto& x : t) x = double(dist(rng));
    return t;
}

SynchronizedCycle make_sync(CycleNumber num, std::vector<double> values) {
    SynchronizedCycle c;
    c.cycle_number = num;
    c.warped_indices = std::move(values);
    return c;
}

void check_matches_brute(const ProfilePair& pair, const BruteResult& brute,
                         const std::vector<double>& t, std::size_t m) {
    REQUIRE(pair.size() == brute.profile.size());
    const std::size_t radius = (m + 1) / 2;
    for (std::size_t j = 0; j < pair.size(); ++j) {
        CHECK(std::abs(pair.profile[j] - brute.profile[j]) <= 1e-9);
        CHECK(pair.profile[j] >= 0.0);
        const auto idx = static_cast<std::size_t>(pair.index[j] - 1);
        const std::size_t gap = j > idx ? j - idx : idx - j;
        CHECK(gap >= radius);
        // Consistency: the stored value IS the distance to the stored neighbor,
        // bit for bit.
        CHECK(pair.profile[j] == subsequence_distance(t, j + 1, idx + 1, m));
    }
}

} // namespace

TEST_CASE("subsequence_distance hand examples") {
    const std::vector<double> t = {1.0, 2.0, 3.0, 5.0};
    CHECK(subsequence_distance(t, 1, 3, 2) == doctest::Approx(std::sqrt(13.0)));
    CHECK(subsequence_distance(t, 2, 2, 2) == 0.0); // self-distance

    const std::vector<double> repeat = {0.0, 0.0, 1.0, 0.0, 0.0, 1.0};
    CHECK(subsequence_distance(repeat, 1, 4, 3) == 0.0);

    CHECK_THROWS_AS(subsequence_distance(t, 0, 1, 2), Error);
    CHECK_THROWS_AS(subsequence_distance(t, 1, 4, 2), Error);
}

TEST_CASE("profiles match the brute-force oracle on random series") {
    std::mt19937 rng(20250818);
    std::uniform_int_distribution<std::size_t> pick_n(80, 1000);
    const std::size_t query_lengths[] = {4, 8, 32};
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t m = query_lengths[rep % 3];
        const std::size_t n = std::max(pick_n(rng), 2 * m + 1);
        const std::vector<double> t = random_series(rng, n);
        const BruteResult brute = brute_profile(t, m);

        const ProfilePair slow = compute_profile(t, m);
        check_matches_brute(slow, brute, t, m);
        // Real-valued randoms have no exact ties, so the argmin is unique.
        CHECK(slow.index == brute.index);

        const ProfilePair fast = compute_profile_fast(t, m);
        check_matches_brute(fast, brute, t, m);
    }
}

TEST_CASE("fast path equals the reference path exactly on integer series") {
    std::mt19937 rng(31415);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t m = rep % 2 == 0 ? 6 : 9;
        const std::vector<double> t = random_integer_series(rng, 120, 1, 12);
        const ProfilePair slow = compute_profile(t, m);
        const ProfilePair fast = compute_profile_fast(t, m);
        // Running sums of integer products are exact, so values AND tie-broken
        // indices agree bitwise.
        CHECK(slow.profile == fast.profile);
        CHECK(slow.index == fast.index);
    }
}

TEST_CASE("constant series gives an all-zero profile") {
    const std::vector<double> t(40, 2.5);
    for (const ProfilePair& pair : {compute_profile(t, 5), compute_profile_fast(t, 5)}) {
        for (std::size_t j = 0; j < pair.size(); ++j) {
            CHECK(pair.profile[j] == 0.0);
            // Everything ties at zero, so the smallest admissible q wins:
            // position 1 once it clears the exclusion zone, else j+1+radius.
            const std::size_t radius = pair.exclusion_radius;
            const std::size_t expected = j >= radius ? 1 : j + 1 + radius;
            CHECK(pair.index[j] == static_cast<std::int64_t>(expected));
        }
    }
}

TEST_CASE("series shorter than 2m is rejected") {
    const std::vector<double> t(15, 1.0);
    CHECK_THROWS_AS(compute_profile(t, 8), Error);
    CHECK_THROWS_AS(compute_profile_fast(t, 8), Error);
    try {
        compute_profile(t, 8);
        FAIL("expected SeriesTooShort");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::series_too_short);
    }
    CHECK_NOTHROW(compute_profile(std::vector<double>(16, 1.0), 8));
}

TEST_CASE("planted motif pair wins, planted discord loses") {
    std::mt19937 rng(271828);
    // Smooth noise background, a motif planted twice, one discord burst.
    std::vector<double> t = random_series(rng, 300, -0.05, 0.05);
    const std::size_t m = 16;
    std::vector<double> motif(m);
    for (std::size_t i = 0; i < m; ++i) motif[i] = std::sin(double(i) / 2.0);
    for (std::size_t i = 0; i < m; ++i) t[40 + i] = motif[i];
    for (std::size_t i = 0; i < m; ++i) t[200 + i] = motif[i];
    for (std::size_t i = 0; i < m; ++i) t[120 + i] = 5.0 * (i % 2 == 0 ? 1.0 : -1.0);

    const ProfilePair pair = compute_profile_fast(t, m);
    const BruteResult brute = brute_profile(t, m);
    check_matches_brute(pair, brute, t, m);

    std::size_t argmin = 0, argmax = 0;
    for (std::size_t j = 1; j < pair.size(); ++j) {
        if (pair.profile[j] < pair.profile[argmin]) argmin = j;
        if (pair.profile[j] > pair.profile[argmax]) argmax = j;
    }
    const bool min_at_motif = argmin == 40 || argmin == 200;
    CHECK(min_at_motif);
    CHECK(pair.index[40] == 201);
    CHECK(pair.index[200] == 41);
    CHECK(argmax == 120);
}

TEST_CASE("z-scored mode matches its own brute oracle") {
    std::mt19937 rng(5050);
    const std::size_t m = 8;
    const std::vector<double> t = random_series(rng, 160);

    // Oracle with explicit per-window normalization, population sigma.
    const std::size_t p = t.size() - m + 1;
    auto znorm = [&](std::size_t j0) {
        std::vector<double> w(t.begin() + j0, t.begin() + j0 + m);
        double mean = 0.0;
        for (double x : w) mean += x;
        mean /= double(m);
        double var = 0.0;
        for (double x : w) var += (x - mean) * (x - mean);
        var /= double(m);
        const double sd = std::sqrt(var);
        for (double& x : w) x = sd > 0.0 ? (x - mean) / sd : 0.0;
        return w;
    };
    const std::size_t radius = (m + 1) / 2;
    std::vector<double> expected(p, std::numeric_limits<double>::infinity());
    for (std::size_t j = 0; j < p; ++j) {
        const std::vector<double> a = znorm(j);
        for (std::size_t q = 0; q < p; ++q) {
            const std::size_t gap = j > q ? j - q : q - j;
            if (gap < radius) continue;
            const std::vector<double> b = znorm(q);
            double acc = 0.0;
            for (std::size_t i = 0; i < m; ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
            expected[j] = std::min(expected[j], std::sqrt(acc));
        }
    }

    const ProfilePair slow = compute_profile(t, m, Normalization::z_score);
    const ProfilePair fast = compute_profile_fast(t, m, Normalization::z_score);
    for (std::size_t j = 0; j < p; ++j) {
        CHECK(slow.profile[j] == doctest::Approx(expected[j]).epsilon(1e-9));
        CHECK(fast.profile[j] == doctest::Approx(expected[j]).epsilon(1e-9));
    }

    // The same shape planted at two levels: a twin under z-scoring, a lone
    // discord under plain distance.
    std::vector<double> planted = t;
    for (std::size_t i = 0; i < m; ++i) {
        const double s = 3.0 * std::sin(double(i));
        planted[20 + i] = s;
        planted[120 + i] = s + 100.0;
    }
    const ProfilePair z = compute_profile_fast(planted, m, Normalization::z_score);
    const ProfilePair plain = compute_profile_fast(planted, m);
    CHECK(z.profile[20] < 1e-6);
    CHECK(z.profile[120] < 1e-6);
    CHECK(plain.profile[120] > 10.0);
}

TEST_CASE("cycle_downsample maps sample positions and indices to cycle units") {
    // Six cycles of length 4: two distinct shapes ABABAB, f=1 so m=4.
    const std::vector<double> a = {1.0, 2.0, 3.0, 4.0};
    const std::vector<double> b = {1.0, 1.0, 2.0, 2.0};
    std::vector<double> t;
    for (int k = 0; k < 3; ++k) {
        t.insert(t.end(), a.begin(), a.end());
        t.insert(t.end(), b.begin(), b.end());
    }
    const ProfilePair pair = compute_profile(t, 4);
    const CycleProfile cp = cycle_downsample(pair, 4, 1);

    REQUIRE(cp.size() == 5); // K - f = 6 - 1
    CHECK(cp.cycle_lag == 1);
    // Cycle 3 repeats cycle 1 exactly (A at distance 0, two cycles back).
    CHECK(cp.value_at(3) == 0.0);
    CHECK(cp.index_at(3) == 1);
    CHECK(cp.value_at(4) == 0.0);
    CHECK(cp.index_at(4) == 2);
    for (std::size_t c = 1; c <= 5; ++c) {
        CHECK(cp.index_at(c) >= 1);
        CHECK(cp.index_at(c) <= 6);
    }

    // K = f + 1 leaves exactly one entry.
    const std::vector<double> two(16, 3.0);
    const CycleProfile single = cycle_downsample(compute_profile(two, 8), 8, 1);
    CHECK(single.size() == 1);
    CHECK(single.values[0] == 0.0);

    CHECK_THROWS_AS(cycle_downsample(pair, 4, 2), Error); // m=4 != 4*2
    try {
        cycle_downsample(pair, 3, 1);
        FAIL("expected QueryNotCycleAligned");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::query_not_cycle_aligned);
    }
}

TEST_CASE("literal downsample mode reads samples d, 2d, ... instead of cycle starts") {
    std::mt19937 rng(606);
    const std::size_t d = 5, f = 2, cycles = 8;
    const std::vector<double> t = random_integer_series(rng, d * cycles, 1, 9);
    const ProfilePair pair = compute_profile(t, d * f);

    const CycleProfile starts = cycle_downsample(pair, d, f, DownsampleMode::cycle_start);
    const CycleProfile literal = cycle_downsample(pair, d, f, DownsampleMode::literal);
    REQUIRE(starts.size() == cycles - f);
    REQUIRE(literal.size() == cycles - f);
    for (std::size_t c = 1; c <= starts.size(); ++c) {
        CHECK(starts.value_at(c) == pair.profile[(c - 1) * d]);
        CHECK(literal.value_at(c) == pair.profile[c * d - 1]);
    }
}

TEST_CASE("two-regime series: early cycles match backward, the regime change points forward") {
    // Regime 1: six repeats of shape X. Regime 2: six repeats of shape Y,
    // which differs from X in its last sample only. A window spanning f=3
    // cycles that straddles the change ([X Y Y]) is then strictly closer to
    // the all-Y windows ahead of it than to anything behind it.
    const std::vector<double> x = {1.0, 3.0, 6.0, 2.0};
    const std::vector<double> y = {1.0, 3.0, 6.0, 5.0};
    std::vector<double> t;
    for (int k = 0; k < 6; ++k) t.insert(t.end(), x.begin(), x.end());
    for (int k = 0; k < 6; ++k) t.insert(t.end(), y.begin(), y.end());

    const std::size_t d = 4, f = 3;
    const ProfilePair pair = compute_profile(t, d * f);
    const CycleProfile cp = cycle_downsample(pair, d, f);
    REQUIRE(cp.size() == 9);

    // Interior of regime 1: identical windows exist earlier, ties point back.
    for (std::size_t c = 3; c <= 4; ++c) {
        CHECK(cp.value_at(c) == 0.0);
        CHECK(cp.index_at(c) < static_cast<std::int64_t>(c));
    }
    // Straddling windows and the first pure regime-2 windows match forward.
    CHECK(cp.index_at(6) > 6);
    CHECK(cp.value_at(7) == 0.0);
    CHECK(cp.index_at(7) > 7);
    CHECK(cp.index_at(8) > 8);
    // Deep in regime 2 the repeats behind win again.
    CHECK(cp.index_at(9) < 9);
}

TEST_CASE("append_cycle equals recomputation from scratch") {
    std::mt19937 rng(1234);
    const std::size_t d = 6, m = 12;
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<double> t = random_integer_series(rng, d * 5, 1, 6);
        const ProfilePair before = compute_profile_fast(t, m);

        const SynchronizedCycle next = make_sync(6, random_integer_series(rng, d, 1, 6));
        const ProfilePair after = append_cycle(before, t, next);

        std::vector<double> extended = t;
        extended.insert(extended.end(), next.warped_indices.begin(), next.warped_indices.end());
        const ProfilePair scratch = compute_profile(extended, m);

        REQUIRE(after.size() == scratch.size());
        CHECK(after.profile == scratch.profile); // integer series: exact
        CHECK(after.index == scratch.index);

        // No entry may increase: the min runs over a superset.
        for (std::size_t j = 0; j < before.size(); ++j) CHECK(after.profile[j] <= before.profile[j]);
    }
}

TEST_CASE("append_cycle on real-valued series stays within 1e-9 of scratch") {
    std::mt19937 rng(777);
    const std::size_t d = 8, m = 16;
    std::vector<double> t = random_series(rng, d * 6);
    ProfilePair pair = compute_profile_fast(t, m);

    for (int step = 0; step < 4; ++step) {
        const SynchronizedCycle next = make_sync(7 + step, random_series(rng, d));
        pair = append_cycle(pair, t, next);
        t.insert(t.end(), next.warped_indices.begin(), next.warped_indices.end());

        const ProfilePair scratch = compute_profile(t, m);
        REQUIRE(pair.size() == scratch.size());
        for (std::size_t j = 0; j < pair.size(); ++j) {
            CHECK(pair.profile[j] == doctest::Approx(scratch.profile[j]).epsilon(1e-9));
            // Stored value always equals the distance to the stored neighbor.
            CHECK(pair.profile[j] ==
                  subsequence_distance(t, j + 1, static_cast<std::size_t>(pair.index[j]), m));
        }
    }
}

TEST_CASE("appending a repeat of cycle 1 pulls its profile to zero, pointing forward") {
    std::mt19937 rng(888);
    const std::size_t d = 8, m = 8;
    // Distinct random cycles so cycle 1 has no perfect match until the append.
    std::vector<double> t = random_integer_series(rng, d * 4, 1, 50);
    const ProfilePair before = compute_profile_fast(t, m);
    CHECK(before.profile[0] > 0.0);

    std::vector<double> copy_of_first(t.begin(), t.begin() + d);
    const ProfilePair after = append_cycle(before, t, make_sync(5, copy_of_first));
    CHECK(after.profile[0] == 0.0);
    CHECK(after.index[0] == static_cast<std::int64_t>(4 * d + 1));
}

TEST_CASE("append to a constant series keeps the profile at zero") {
    const std::size_t d = 5;
    const std::vector<double> t(d * 4, 1.0);
    const ProfilePair before = compute_profile(t, d);
    const ProfilePair after = append_cycle(before, t, make_sync(5, std::vector<double>(d, 1.0)));
    for (double v : after.profile) CHECK(v == 0.0);
}

TEST_CASE("append_cycle rejects a cycle that does not divide the series") {
    const std::vector<double> t(20, 1.0);
    const ProfilePair pair = compute_profile(t, 5);
    try {
        append_cycle(pair, t, make_sync(5, std::vector<double>(3, 1.0)));
        FAIL("expected CycleLengthMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::cycle_length_mismatch);
    }
}

TEST_CASE("streaming profile tracks full recomputation across many appends") {
    std::mt19937 rng(13579);
    const std::size_t d = 6, f = 2, m = d * f;
    std::vector<double> t = random_integer_series(rng, d * 4, 1, 10);

    StreamingProfile streaming(t, d, m);
    for (int step = 0; step < 12; ++step) {
        const std::vector<double> cycle = random_integer_series(rng, d, 1, 10);
        streaming.append(cycle);
        t.insert(t.end(), cycle.begin(), cycle.end());
    }
    CHECK(streaming.cycle_count() == 16);

    const ProfilePair scratch = compute_profile(t, m);
    CHECK(streaming.profile() == scratch.profile); // integers: exact equality
    CHECK(streaming.index() == scratch.index);

    const CycleProfile via_stream = streaming.cycle_profile();
    const CycleProfile via_scratch = cycle_downsample(scratch, d, f);
    CHECK(via_stream.values == via_scratch.values);
    CHECK(via_stream.indices == via_scratch.indices);
}

TEST_CASE("streaming profile resumes from a stored pair") {
    std::mt19937 rng(2468);
    const std::size_t d = 4, m = 8;
    std::vector<double> t = random_integer_series(rng, d * 5, 1, 8);
    const ProfilePair stored = compute_profile_fast(t, m);

    StreamingProfile resumed(t, d, stored);
    StreamingProfile fresh(t, d, m);
    const std::vector<double> cycle = random_integer_series(rng, d, 1, 8);
    resumed.append(cycle);
    fresh.append(cycle);
    CHECK(resumed.profile() == fresh.profile());
    CHECK(resumed.index() == fresh.index());

    try {
        resumed.append(std::vector<double>(d + 1, 1.0));
        FAIL("expected CycleLengthMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::cycle_length_mismatch);
    }
}

TEST_CASE("streaming profile validates its construction inputs") {
    const std::vector<double> t(24, 1.0);
    CHECK_THROWS_AS(StreamingProfile(std::vector<double>(23, 1.0), 4, 8), Error); // partial cycle
    CHECK_THROWS_AS(StreamingProfile(t, 4, 16), Error);                           // n < 2m

    ProfilePair z = compute_profile(t, 4, Normalization::z_score);
    CHECK_THROWS_AS(StreamingProfile(t, 4, z), Error); // resume needs plain distance

    ProfilePair wrong = compute_profile(t, 4);
    wrong.profile.pop_back();
    wrong.index.pop_back();
    CHECK_THROWS_AS(StreamingProfile(t, 4, wrong), Error);
}

TEST_CASE("z-scored append_cycle recomputes and matches scratch") {
    std::mt19937 rng(9999);
    const std::size_t d = 6, m = 12;
    std::vector<double> t = random_series(rng, d * 5);
    const ProfilePair before = compute_profile(t, m, Normalization::z_score);
    const SynchronizedCycle next = make_sync(6, random_series(rng, d));
    const ProfilePair after = append_cycle(before, t, next);

    std::vector<double> extended = t;
    extended.insert(extended.end(), next.warped_indices.begin(), next.warped_indices.end());
    const ProfilePair scratch = compute_profile(extended, m, Normalization::z_score);
    for (std::size_t j = 0; j < after.size(); ++j)
        CHECK(after.profile[j] == doctest::Approx(scratch.profile[j]).epsilon(1e-9));
}
