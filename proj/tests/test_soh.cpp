#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "kneespot/dtw.hpp"
#include "kneespot/soh.hpp"
#include "kneespot/synthetic.hpp"

using namespace kneespot;

namespace {

RegressorConfig tiny_config(std::vector<std::size_t> layers, std::size_t dense) {
    RegressorConfig cfg;
    cfg.lstm_layer_sizes = std::move(layers);
    cfg.dense_size = dense;
    return cfg;
}

/// A handmade synchronized cycle: d warped indices starting at 1 and advancing
/// by `stride` per step, the kind of trajectory the aligner produces.
SynchronizedCycle ramp_cycle(CycleNumber number, std::size_t d, double stride) {
    SynchronizedCycle cycle;
    cycle.cycle_number = number;
    for (std::size_t i = 0; i < d; ++i) cycle.warped_indices.push_back(1.0 + stride * double(i));
    return cycle;
}

/// Runs the aligner over a synthetic battery and returns the synchronized
/// cycles for the requested cycle numbers (reference = first cycle).
std::vector<SynchronizedCycle> synchronized_subset(const SynthBattery& battery,
                                                   const std::vector<CycleNumber>& numbers) {
    ReferenceCycle reference{battery.cycles.front()};
    std::vector<SynchronizedCycle> out;
    for (CycleNumber number : numbers) {
        const DischargeCycle& cycle = battery.cycles.at(std::size_t(number - 1));
        REQUIRE(cycle.cycle_number == number);
        out.push_back(synchronize_cycle(reference, cycle, dtw_align(reference, cycle)));
    }
    return out;
}

} // namespace

TEST_CASE("parameter count follows the flat layout") {
    // {2, 3} layers, dense 2: (8+16+8) + (24+36+12) + (6+2) + (2+1) = 115.
    CHECK(parameter_count(tiny_config({2, 3}, 2)) == 115);
    // Single layer {1}, dense 1: (4+4+4) + (1+1) + (1+1) = 16.
    CHECK(parameter_count(tiny_config({1}, 1)) == 16);
    CHECK(parameter_count(RegressorConfig{}) ==
          (4 * 16 * 1 + 4 * 16 * 16 + 4 * 16) + (4 * 32 * 16 + 4 * 32 * 32 + 4 * 32) +
              (8 * 32 + 8) + (8 + 1));
}

TEST_CASE("configuration validation") {
    CHECK_THROWS_AS(parameter_count(tiny_config({}, 4)), Error);
    CHECK_THROWS_AS(parameter_count(tiny_config({4, 0}, 4)), Error);
    CHECK_THROWS_AS(parameter_count(tiny_config({4}, 0)), Error);
    RegressorConfig bad;
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = RegressorConfig{};
    bad.epochs = 0;
    CHECK_THROWS_AS(bad.validate(), Error);

    const RegressorConfig full = RegressorConfig::full_scale();
    CHECK(full.lstm_layer_sizes == std::vector<std::size_t>{300, 500});
    CHECK(full.dense_size == 100);
}

TEST_CASE("a zeroed network outputs exactly its output bias") {
    SohModel model;
    model.config = tiny_config({3, 2}, 2);
    model.input_length = 5;
    model.input_scale = 1.0 / 5.0;
    model.weights.assign(parameter_count(model.config), 0.0);
    model.weights.back() = 0.73; // the output bias is the last element

    CHECK(predict(model, ramp_cycle(1, 5, 1.0)) == 0.73);
    CHECK(predict(model, ramp_cycle(9, 5, 0.25)) == 0.73);
}

TEST_CASE("predict rejects mismatched dimensions") {
    SohModel model;
    model.config = tiny_config({2}, 2);
    model.input_length = 4;
    model.input_scale = 0.25;
    model.weights.assign(parameter_count(model.config), 0.0);

    try {
        predict(model, ramp_cycle(1, 6, 1.0)); // wrong length
        FAIL("expected a dimension error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::dimension_mismatch);
    }

    model.weights.pop_back(); // wrong weight count
    try {
        predict(model, ramp_cycle(1, 4, 1.0));
        FAIL("expected a dimension error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::dimension_mismatch);
    }
}

TEST_CASE("rmse") {
    CHECK(rmse({0.5, 0.7, 0.9}, {0.5, 0.7, 0.9}) == 0.0);
    CHECK(rmse({1.0, 1.0}, {0.0, 2.0}) == 1.0);
    CHECK(rmse({3.0}, {-1.0}) == 4.0);
    try {
        rmse({1.0, 2.0}, {1.0});
        FAIL("expected a length error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::length_mismatch);
    }
    CHECK_THROWS_AS(rmse({}, {}), Error);
}

TEST_CASE("analytic gradients match central finite differences") {
    const RegressorConfig cfg = [] {
        RegressorConfig c = tiny_config({4, 3}, 3);
        c.seed = 9;
        return c;
    }();
    const std::vector<SynchronizedCycle> cycles = {
        ramp_cycle(1, 6, 1.0),
        ramp_cycle(2, 6, 0.8),
        ramp_cycle(3, 6, 1.3),
    };
    CHECK(gradient_check(cfg, cycles, {0.9, 0.8, 0.7}) < 1e-4);
}

TEST_CASE("gradient check holds for a single time step") {
    RegressorConfig cfg = tiny_config({3}, 2);
    cfg.seed = 4;
    CHECK(gradient_check(cfg, {ramp_cycle(1, 1, 1.0)}, {0.5}) < 1e-4);
}

TEST_CASE("training rejects misaligned data") {
    SOHSeries targets;
    targets.values.assign(10, 0.9);
    RegressorConfig cfg = tiny_config({2}, 2);
    cfg.epochs = 1;

    auto expect_misaligned = [&](const std::vector<SynchronizedCycle>& cycles) {
        try {
            train(cycles, targets, cfg);
            FAIL("expected misaligned data to be rejected");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::misaligned_data);
        }
    };

    expect_misaligned({});                                          // nothing to train on
    expect_misaligned({ramp_cycle(1, 4, 1.0), ramp_cycle(2, 5, 1.0)}); // ragged lengths
    expect_misaligned({ramp_cycle(3, 4, 1.0), ramp_cycle(3, 4, 1.0)}); // not increasing
    expect_misaligned({ramp_cycle(11, 4, 1.0)});                    // no target for cycle 11
    expect_misaligned({ramp_cycle(0, 4, 1.0)});                     // cycles are 1-based
}

TEST_CASE("training is deterministic") {
    const std::vector<SynchronizedCycle> cycles = {
        ramp_cycle(1, 8, 1.0),
        ramp_cycle(2, 8, 0.9),
        ramp_cycle(4, 8, 1.1),
        ramp_cycle(7, 8, 0.7),
    };
    SOHSeries targets;
    targets.values = {0.95, 0.93, 0.9, 0.88, 0.85, 0.84, 0.8};
    RegressorConfig cfg = tiny_config({4}, 2);
    cfg.epochs = 40;

    const SohModel a = train(cycles, targets, cfg);
    const SohModel b = train(cycles, targets, cfg);
    CHECK(a.weights == b.weights);
    CHECK(a.epoch_loss == b.epoch_loss);
    CHECK(a.input_length == 8);
    CHECK(a.input_scale == 1.0 / 8.0);
    CHECK(a.trained_from == 1);
    CHECK(a.trained_to == 7);
    for (double loss : a.epoch_loss) CHECK(std::isfinite(loss));

    // predict is pure: same inputs, same answer, bit for bit.
    CHECK(predict(a, cycles[2]) == predict(a, cycles[2]));
    CHECK(predict(a, cycles[2]) == predict(b, cycles[2]));
}

TEST_CASE("a runaway learning rate reports a non-finite loss") {
    const std::vector<SynchronizedCycle> cycles = {ramp_cycle(1, 6, 1.0), ramp_cycle(2, 6, 0.8)};
    SOHSeries targets;
    targets.values = {0.9, 0.85};
    RegressorConfig cfg = tiny_config({3}, 2);
    cfg.learning_rate = 1e155;
    cfg.epochs = 20;
    try {
        train(cycles, targets, cfg);
        FAIL("expected training to diverge");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::non_finite_loss);
    }
}

TEST_CASE("training overfits twenty cycles of a synthetic battery") {
    SynthSpec spec;
    spec.base_cycle_length = 64;
    spec.cycle_count = 600;
    spec.post_knee_acceleration = 3e-6; // gentle knee: SOH stays well above the floor
    spec.noise_sigma = 0.0; // clean fixture: this probes optimizer capacity, not noise robustness
    spec.seed = 7;
    const SynthBattery battery = generate_battery(spec);

    // Twenty cycles from the knee onward, where the trajectories actually differ.
    std::vector<CycleNumber> numbers;
    for (CycleNumber c = 300; numbers.size() < 20; c += 15) numbers.push_back(c);
    const std::vector<SynchronizedCycle> cycles = synchronized_subset(battery, numbers);

    const SohModel model = train(cycles, battery.soh, RegressorConfig{}); // desk scale, 500 epochs

    std::vector<double> estimates, truth;
    for (std::size_t i = 0; i < cycles.size(); ++i) {
        estimates.push_back(predict(model, cycles[i]));
        truth.push_back(battery.soh.at_cycle(numbers[i]));
        CHECK(std::abs(estimates.back() - truth.back()) < 0.01);
    }
    CHECK(rmse(estimates, truth) < 0.005);
    CHECK(model.epoch_loss.back() < model.epoch_loss.front());
}

TEST_CASE("scaling every target scales every prediction") {
    // Interpolation fixture: few points, ample epochs, no early stop.
    std::vector<SynchronizedCycle> cycles;
    std::vector<double> base = {0.95, 0.9, 0.85, 0.8, 0.75, 0.7};
    for (std::size_t i = 0; i < base.size(); ++i)
        cycles.push_back(ramp_cycle(CycleNumber(i + 1), 8, 0.7 + 0.12 * double(i)));

    RegressorConfig cfg = tiny_config({5}, 3);
    cfg.learning_rate = 5e-3;
    cfg.epochs = 3000;
    cfg.plateau_epochs = 3000;

    const double k = 2.0;
    SOHSeries targets, scaled;
    targets.values = base;
    for (double v : base) scaled.values.push_back(k * v);

    const SohModel plain = train(cycles, targets, cfg);
    const SohModel stretched = train(cycles, scaled, cfg);
    for (const SynchronizedCycle& cycle : cycles)
        CHECK(std::abs(predict(stretched, cycle) - k * predict(plain, cycle)) < 1e-3);
}
