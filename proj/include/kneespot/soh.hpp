#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kneespot/types.hpp"

namespace kneespot {

/// Recurrent-regressor settings. Defaults are desk scale, sized so training
/// runs in seconds; `full_scale()` returns the full-size preset.
struct RegressorConfig {
    std::vector<std::size_t> lstm_layer_sizes{16, 32};
    std::size_t dense_size = 8;
    double learning_rate = 1e-3;
    std::size_t epochs = 500;
    std::size_t plateau_epochs = 50; // stop after this many epochs without improvement
    std::uint64_t seed = 1;

    void validate() const;

    static RegressorConfig full_scale() {
        RegressorConfig cfg;
        cfg.lstm_layer_sizes = {300, 500};
        cfg.dense_size = 100;
        return cfg;
    }
};

/// Number of trainable parameters for a configuration (the input is a scalar
/// per time step, so the count is independent of the cycle length).
std::size_t parameter_count(const RegressorConfig& cfg);

/// A trained cycle-to-SOH regressor: stacked LSTM layers over the scaled
/// warped-index sequence, a tanh dense layer on the final hidden state, and a
/// linear scalar head.
///
/// `weights` is one flat vector laid out as, per LSTM layer: input weights
/// (4H x I, gate order input/forget/cell/output), recurrent weights (4H x H),
/// bias (4H); then the dense layer (D x H_last plus D), then the head
/// (D plus 1). The output bias is the last element.
struct SohModel {
    RegressorConfig config;
    std::size_t input_length = 0; // d; every cycle fed in must have this length
    double input_scale = 0.0;     // 1/d, applied to each warped index
    std::vector<double> weights;

    std::string category;   // which fleet category this model serves
    std::string battery_id; // training provenance
    std::string training_span = "stage2"; // "stage2" or "full_life"
    CycleNumber trained_from = 0;
    CycleNumber trained_to = 0;
    std::vector<double> epoch_loss; // sum of squared errors after each epoch
};

/// Trains on synchronized cycles against their SOH targets (looked up by
/// cycle number) with full-batch adaptive-moment gradient descent on the sum
/// of squared errors. Deterministic for a given seed. Stops early once the
/// loss has not improved for `plateau_epochs` epochs.
SohModel train(const std::vector<SynchronizedCycle>& cycles, const SOHSeries& targets,
               const RegressorConfig& cfg);

/// Forward pass; pure function of (model, cycle).
double predict(const SohModel& model, const SynchronizedCycle& cycle);

/// Root mean squared error between two equal-length sequences.
double rmse(const std::vector<double>& estimates, const std::vector<double>& targets);

/// Correctness gate for the hand-built network: compares analytic gradients
/// of the training loss against central finite differences (step 1e-5) over
/// every parameter and returns the largest relative error. Keep the
/// configuration tiny — the finite-difference sweep is O(parameters^2).
double gradient_check(const RegressorConfig& cfg, const std::vector<SynchronizedCycle>& cycles,
                      const std::vector<double>& targets);

} // namespace kneespot
