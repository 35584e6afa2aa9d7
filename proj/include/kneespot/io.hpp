#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kneespot/fleet.hpp"
#include "kneespot/soh.hpp"
#include "kneespot/types.hpp"

namespace kneespot {

inline constexpr const char* kToolVersion = "0.1.0";
/// Bumped whenever a persisted JSON layout changes incompatibly.
inline constexpr int kFormatVersion = 1;

/// One battery as read from a cycle CSV: ordered discharge cycles numbered
/// contiguously from 1, plus the SOH series when the file carries capacity.
struct BatteryData {
    std::string battery_id;
    std::vector<DischargeCycle> cycles;
    std::optional<SOHSeries> soh;
};

/// Reads a cycle CSV (header `battery_id,cycle_number,time_step,voltage`,
/// optionally with a trailing `capacity` column). Rows must be grouped by
/// battery, cycles numbered contiguously from 1, time steps from 1 within
/// each cycle. When capacity is present, SOH = capacity / nominal_capacity.
/// Batteries come back sorted by id.
std::vector<BatteryData> ingest(const std::string& path, double nominal_capacity = 1.1);

/// Writes batteries back to the same CSV format ingest reads. Voltages and
/// capacities are printed round-trip exactly; ingest(emit(x)) preserves every
/// cycle bit for bit.
void emit_csv(const std::string& path, const std::vector<BatteryData>& batteries);

/// Knee/EOL summary table (header `battery_id,knee_onset,eol`), the input of
/// the fleet-fitting workflow.
std::vector<FleetPoint> read_fleet_table(const std::string& path);
void write_fleet_table(const std::string& path, const std::vector<FleetPoint>& points);

/// FNV-1a 64-bit hash, used to fingerprint inputs in manifests.
std::uint64_t fnv1a64(const std::string& bytes);
std::string hash_file(const std::string& path); // 16 hex digits

/// Provenance block embedded in every emitted artifact: tool version, the
/// effective configuration (a JSON object, serialized), and input content
/// hashes. Deliberately no timestamps, so reruns are byte-identical.
struct RunManifest {
    std::string tool_version = kToolVersion;
    std::string config_json = "{}";
    std::map<std::string, std::string> input_hashes;
};

/// Persisted fleet model: the EOL-on-knee line, the mixture, and the category
/// roles, all exactly as fitted.
struct FleetModelFile {
    LineFit line;
    GmmModel gmm;
    CategoryMap categories;
    RunManifest manifest;
};

void save_fleet_model(const std::string& path, const FleetModelFile& file);
FleetModelFile load_fleet_model(const std::string& path);

/// SOH model persistence; doubles survive the round trip bit for bit.
void save_soh_model(const std::string& path, const SohModel& model, const RunManifest& manifest);
SohModel load_soh_model(const std::string& path, RunManifest* manifest = nullptr);

} // namespace kneespot
