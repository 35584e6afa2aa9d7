#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kneespot/detector.hpp"
#include "kneespot/io.hpp"

namespace kneespot {

const char* verdict_kind_name(Verdict::Kind kind);

/// A run of consecutive cycles that produced the same verdict (and, for
/// candidates, the same candidate cycle); the compact form of a verdict trace.
struct VerdictSpan {
    Verdict::Kind kind = Verdict::Kind::warming;
    CycleNumber first = 0;
    CycleNumber last = 0;
    CycleNumber cycle = 0; // candidate / knee-onset payload, 0 otherwise
};

/// Everything the detector said about one battery.
struct DetectionOutcome {
    std::string battery_id;
    CycleNumber cycles_seen = 0;
    double ucl = 0.0; // 0 until warm-up completed
    std::vector<VerdictSpan> trace;
    std::optional<CycleNumber> knee_onset;
    std::optional<CycleNumber> knee_step; // cycle at which the verdict landed
};

/// Streams every cycle of one battery through a fresh detector.
DetectionOutcome detect_battery(const BatteryData& battery, const DetectorConfig& cfg);

/// Detects over a fleet with a small worker pool. Output order follows the
/// input order regardless of scheduling; workers = 0 picks a sensible default.
std::vector<DetectionOutcome> detect_fleet(const std::vector<BatteryData>& batteries,
                                           const DetectorConfig& cfg, std::size_t workers = 0);

/// The trained models a fleet-wide estimation run can draw from.
struct ModelStore {
    std::vector<SohModel> models;
    std::vector<std::string> sources; // aligned with models; file paths or labels

    /// First model whose tag matches; throws NoModelForCategory otherwise.
    std::size_t index_for(Category category) const;
};

struct EstimateRow {
    CycleNumber cycle = 0;
    double estimate = 0.0;
    std::optional<double> truth;
};

struct EstimationOutcome {
    DetectionOutcome detection;
    std::optional<Category> category; // set once a knee onset is found
    std::string model_source;         // which store entry produced the estimates
    std::vector<EstimateRow> estimates;
    std::optional<double> rmse; // present when the stream carries SOH truth
};

/// Online workflow for one battery: detect the knee onset, classify it under
/// the fleet model's knee-axis marginals, pick the category's model from the
/// store, and estimate SOH for every cycle from the knee onset up to the
/// fleet line's predicted end of life (the models are trained on stage-2
/// cycles, so estimates past that point would extrapolate). A stream with no
/// knee found yields an outcome with no estimates.
EstimationOutcome estimate_battery(const BatteryData& battery, const DetectorConfig& cfg,
                                   const FleetModelFile& fleet, const ModelStore& store);

std::vector<EstimationOutcome> estimate_fleet(const std::vector<BatteryData>& batteries,
                                              const DetectorConfig& cfg,
                                              const FleetModelFile& fleet, const ModelStore& store,
                                              std::size_t workers = 0);

/// Report files. Each JSON report embeds the manifest and a `report` type tag;
/// the plot-ready CSV flattens per-cycle estimates for plotting tools.
void write_detect_report(const std::string& path, const std::vector<DetectionOutcome>& outcomes,
                         const RunManifest& manifest);
void write_estimate_report(const std::string& path, const std::vector<EstimationOutcome>& outcomes,
                           const RunManifest& manifest);
void write_estimate_csv(const std::string& path, const std::vector<EstimationOutcome>& outcomes);

/// Flattens a JSON report (either kind) to its plot-ready CSV form.
void report_to_csv(const std::string& report_path, const std::string& csv_path);

} // namespace kneespot
