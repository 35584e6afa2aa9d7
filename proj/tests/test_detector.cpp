#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "kneespot/detector.hpp"

using namespace kneespot;

namespace {

// A discharge-like curve over `steps` samples; `bend` reshapes the tail.
DischargeCycle shaped_cycle(CycleNumber num, std::size_t steps, double bend, std::mt19937& rng,
                            double noise_sigma) {
    std::normal_distribution<double> noise(0.0, noise_sigma);
    DischargeCycle cycle;
    cycle.cycle_number = num;
    for (std::size_t i = 1; i <= steps; ++i) {
        const double tau = double(i - 1) / double(steps - 1);
        double v = 2.0 + 1.3 * (1.0 - std::pow(tau, bend));
        if (noise_sigma > 0.0) v += noise(rng);
        cycle.samples.push_back({static_cast<std::int64_t>(i), v});
    }
    return cycle;
}

DischargeCycle constant_shape(CycleNumber num) {
    // Deterministic fixed shape, identical across cycles.
    DischargeCycle cycle;
    cycle.cycle_number = num;
    for (std::int64_t i = 1; i <= 12; ++i)
        cycle.samples.push_back({i, 3.3 - 0.1 * double(i - 1)});
    return cycle;
}

} // namespace

TEST_CASE("compute_ucl drops the first entry and uses population sigma") {
    CycleProfile profile;
    profile.values = {9.0, 1.0, 2.0, 3.0}; // first entry must not contribute
    profile.indices = {1, 1, 1, 1};
    profile.cycle_lag = 1;
    CHECK(compute_ucl(profile) == doctest::Approx(2.0 + 1.5 * std::sqrt(2.0 / 3.0)).epsilon(1e-12));

    CycleProfile flat;
    flat.values = {0.3, 0.7, 0.7, 0.7};
    flat.indices = {1, 1, 1, 1};
    CHECK(compute_ucl(flat) == doctest::Approx(0.7).epsilon(1e-12));

    CycleProfile tiny;
    tiny.values = {0.5};
    tiny.indices = {1};
    try {
        compute_ucl(tiny);
        FAIL("expected TooFewEntries");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::too_few_entries);
    }
}

TEST_CASE("detector config invariants") {
    DetectorConfig ok;
    ok.warmup_cycles = 21;
    ok.cycle_lag = 10;
    CHECK_NOTHROW(ok.validate());

    DetectorConfig equal_bound;
    equal_bound.warmup_cycles = 20;
    equal_bound.cycle_lag = 10;
    CHECK_THROWS_AS(equal_bound.validate(), Error);

    DetectorConfig zero_lag;
    zero_lag.cycle_lag = 0;
    CHECK_THROWS_AS(zero_lag.validate(), Error);
}

TEST_CASE("warm-up builds series, profile, and a fixed control limit") {
    DetectorConfig cfg;
    cfg.warmup_cycles = 25;
    cfg.cycle_lag = 5;

    std::vector<DischargeCycle> cycles;
    for (CycleNumber s = 1; s <= 25; ++s) cycles.push_back(constant_shape(s));

    KneeDetector detector = KneeDetector::warm_up(cycles, cfg);
    CHECK(detector.phase() == KneeDetector::Phase::monitoring);
    CHECK(detector.cycle_length() == 12);
    CHECK(detector.profile().size() == 20); // K - f
    // Identical cycles: zero profile, zero control limit.
    CHECK(detector.ucl() == 0.0);
    for (double v : detector.profile().values) CHECK(v == 0.0);

    SUBCASE("warm-up needs exactly K cycles") {
        cycles.pop_back();
        CHECK_THROWS_AS(KneeDetector::warm_up(cycles, cfg), Error);
    }
    SUBCASE("accessors are guarded before warm-up completes") {
        KneeDetector fresh(cfg);
        CHECK_THROWS_AS(fresh.ucl(), Error);
        CHECK_THROWS_AS(fresh.profile(), Error);
        CHECK(fresh.phase() == KneeDetector::Phase::warming_up);
    }
}

TEST_CASE("incremental feeding reports warming until K cycles have arrived") {
    DetectorConfig cfg;
    cfg.warmup_cycles = 25;
    cfg.cycle_lag = 5;
    KneeDetector detector(cfg);
    for (CycleNumber s = 1; s <= 25; ++s) {
        const Verdict verdict = detector.step(constant_shape(s));
        CHECK(verdict.kind == Verdict::Kind::warming);
    }
    CHECK(detector.phase() == KneeDetector::Phase::monitoring);
}

TEST_CASE("cycle numbering must be contiguous from 1") {
    KneeDetector detector;
    CHECK_THROWS_AS(detector.step(constant_shape(2)), Error);
    CHECK_NOTHROW(detector.step(constant_shape(1)));
    try {
        detector.step(constant_shape(5));
        FAIL("expected NonContiguousCycles");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::non_contiguous_cycles);
    }
}

TEST_CASE("a stationary stream never changes verdict") {
    DetectorConfig cfg;
    cfg.warmup_cycles = 25;
    cfg.cycle_lag = 5;
    KneeDetector detector(cfg);
    for (CycleNumber s = 1; s <= 25; ++s) detector.step(constant_shape(s));
    for (CycleNumber s = 26; s <= 400; ++s) {
        const Verdict verdict = detector.step(constant_shape(s));
        CHECK(verdict.kind == Verdict::Kind::no_change);
    }
    CHECK(detector.phase() == KneeDetector::Phase::monitoring);
    CHECK(!detector.knee_onset().has_value());
}

TEST_CASE("an abrupt trajectory-shape change is found within the cycle lag") {
    DetectorConfig cfg; // defaults: K = 110, f = 10
    const CycleNumber change = 300;
    std::mt19937 rng(424242);

    KneeDetector detector(cfg);
    std::vector<Verdict> verdicts;
    std::optional<CycleNumber> knee;
    std::optional<CycleNumber> knee_step;
    for (CycleNumber s = 1; s <= 360 && !knee; ++s) {
        const bool before = s <= change;
        // The regime change shortens the cycle and reshapes its tail.
        DischargeCycle cycle = before ? shaped_cycle(s, 24, 3.0, rng, 0.004)
                                      : shaped_cycle(s, 19, 1.6, rng, 0.004);
        const Verdict verdict = detector.step(cycle);
        verdicts.push_back(verdict);
        if (verdict.kind == Verdict::Kind::knee_onset) {
            knee = verdict.cycle;
            knee_step = s;
        }
    }

    REQUIRE(knee.has_value());
    CHECK(std::abs(*knee - (change + 1)) <= static_cast<CycleNumber>(cfg.cycle_lag));
    CHECK(detector.phase() == KneeDetector::Phase::finished);
    CHECK(detector.knee_onset() == knee);

    // The verdict lands once the f entries after the onset have been vetted,
    // i.e. exactly 2f cycles after it — the upper end of the delay bound.
    CHECK(*knee_step == *knee + 2 * static_cast<CycleNumber>(cfg.cycle_lag));

    // Terminal state rejects further cycles.
    try {
        detector.step(shaped_cycle(*knee_step + 1, 19, 1.6, rng, 0.004));
        FAIL("expected DetectorFinished");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::detector_finished);
    }
}

TEST_CASE("identical verdict stream on identical input") {
    auto run = [] {
        DetectorConfig cfg;
        cfg.warmup_cycles = 30;
        cfg.cycle_lag = 6;
        std::mt19937 rng(777);
        KneeDetector detector(cfg);
        std::vector<Verdict> verdicts;
        for (CycleNumber s = 1; s <= 150; ++s) {
            DischargeCycle cycle = s <= 90 ? shaped_cycle(s, 20, 3.0, rng, 0.003)
                                           : shaped_cycle(s, 16, 1.8, rng, 0.003);
            verdicts.push_back(detector.step(cycle));
            if (detector.phase() == KneeDetector::Phase::finished) break;
        }
        return verdicts;
    };
    CHECK(run() == run());
}

TEST_CASE("the control limit is fixed at warm-up and candidates confirm or abort") {
    DetectorConfig cfg;
    cfg.warmup_cycles = 25;
    cfg.cycle_lag = 5;
    std::mt19937 rng(31);
    KneeDetector detector(cfg);
    for (CycleNumber s = 1; s <= 25; ++s) detector.step(shaped_cycle(s, 16, 3.0, rng, 0.002));
    const double ucl = detector.ucl();

    std::optional<CycleNumber> candidate_cycle;
    std::optional<CycleNumber> candidate_step;
    for (CycleNumber s = 26; s <= 120; ++s) {
        DischargeCycle cycle =
            s <= 60 ? shaped_cycle(s, 16, 3.0, rng, 0.002) : shaped_cycle(s, 12, 1.5, rng, 0.002);
        const Verdict verdict = detector.step(cycle);
        CHECK(detector.ucl() == ucl); // never recomputed
        if (verdict.kind == Verdict::Kind::candidate && !candidate_cycle) {
            candidate_cycle = verdict.cycle;
            candidate_step = s;
            CHECK(detector.candidate() == verdict.cycle);
            CHECK(detector.phase() == KneeDetector::Phase::confirming);
            // A candidate for cycle c matures once windows beyond it exist,
            // somewhere between steps c+f and c+2f.
            const CycleNumber lag = static_cast<CycleNumber>(cfg.cycle_lag);
            CHECK(s >= verdict.cycle + lag);
            CHECK(s <= verdict.cycle + 2 * lag);
        }
        if (detector.phase() == KneeDetector::Phase::finished) break;
    }
    REQUIRE(candidate_cycle.has_value());
    CHECK(*candidate_cycle > static_cast<CycleNumber>(cfg.warmup_cycles));
    CHECK(detector.knee_onset().has_value());
    CHECK(std::abs(*detector.knee_onset() - 61) <= static_cast<CycleNumber>(cfg.cycle_lag));
}

TEST_CASE("a change soon after warm-up is caught, and never blamed on warm-up cycles") {
    DetectorConfig cfg;
    cfg.warmup_cycles = 25;
    cfg.cycle_lag = 5;
    const CycleNumber change = 32; // last old-regime cycle, shortly past warm-up
    std::mt19937 rng(55);
    KneeDetector detector(cfg);
    std::optional<CycleNumber> knee;
    for (CycleNumber s = 1; s <= 90 && !knee; ++s) {
        DischargeCycle cycle = s <= change ? shaped_cycle(s, 16, 3.0, rng, 0.002)
                                           : shaped_cycle(s, 12, 1.5, rng, 0.002);
        const Verdict verdict = detector.step(cycle);
        if (verdict.kind == Verdict::Kind::knee_onset) knee = verdict.cycle;
    }
    REQUIRE(knee.has_value());
    CHECK(*knee > static_cast<CycleNumber>(cfg.warmup_cycles));
    CHECK(std::abs(*knee - (change + 1)) <= static_cast<CycleNumber>(cfg.cycle_lag));
}
