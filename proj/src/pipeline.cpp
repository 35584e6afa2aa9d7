#include "kneespot/pipeline.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "kneespot/dtw.hpp"

namespace kneespot {

namespace {

using nlohmann::json;

/// Runs `work(i)` for every index in [0, count) on a small pool. The first
/// exception wins and is rethrown on the caller's thread.
void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& work) {
    if (workers == 0) workers = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    workers = std::min(workers, count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) work(i);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto run = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                work(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                next.store(count); // drain remaining work
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run);
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

void append_to_trace(std::vector<VerdictSpan>& trace, const Verdict& verdict, CycleNumber at) {
    if (!trace.empty() && trace.back().kind == verdict.kind && trace.back().cycle == verdict.cycle &&
        trace.back().last + 1 == at) {
        trace.back().last = at;
        return;
    }
    trace.push_back({verdict.kind, at, at, verdict.cycle});
}

json span_to_json(const VerdictSpan& span) {
    json j{{"verdict", verdict_kind_name(span.kind)}, {"first", span.first}, {"last", span.last}};
    if (span.cycle != 0) j["cycle"] = span.cycle;
    return j;
}

json detection_to_json(const DetectionOutcome& outcome) {
    json j{{"battery_id", outcome.battery_id},
           {"cycles_seen", outcome.cycles_seen},
           {"ucl", outcome.ucl},
           {"knee_onset", nullptr},
           {"knee_step", nullptr},
           {"trace", json::array()}};
    if (outcome.knee_onset) j["knee_onset"] = *outcome.knee_onset;
    if (outcome.knee_step) j["knee_step"] = *outcome.knee_step;
    for (const VerdictSpan& span : outcome.trace) j["trace"].push_back(span_to_json(span));
    return j;
}

json report_skeleton(const char* report_type, const RunManifest& manifest) {
    json config;
    try {
        config = json::parse(manifest.config_json);
    } catch (const json::exception& e) {
        fail(Errc::bad_artifact, std::string("manifest config is not valid JSON: ") + e.what());
    }
    return json{{"kind", "report"},
                {"report", report_type},
                {"format_version", kFormatVersion},
                {"manifest",
                 {{"tool_version", manifest.tool_version},
                  {"config", std::move(config)},
                  {"input_hashes", manifest.input_hashes}}},
                {"batteries", json::array()}};
}

void dump_report(const std::string& path, const json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(Errc::io_error, "cannot open " + path + " for writing");
    out << j.dump(2) << '\n';
    if (!out) fail(Errc::io_error, "failed writing " + path);
}

std::string csv_double(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, end);
}

} // namespace

const char* verdict_kind_name(Verdict::Kind kind) {
    switch (kind) {
    case Verdict::Kind::warming: return "warming";
    case Verdict::Kind::no_change: return "no_change";
    case Verdict::Kind::candidate: return "candidate";
    case Verdict::Kind::knee_onset: return "knee_onset";
    }
    return "unknown";
}

DetectionOutcome detect_battery(const BatteryData& battery, const DetectorConfig& cfg) {
    DetectionOutcome outcome;
    outcome.battery_id = battery.battery_id;
    KneeDetector detector(cfg);
    for (const DischargeCycle& cycle : battery.cycles) {
        const Verdict verdict = detector.step(cycle);
        outcome.cycles_seen = cycle.cycle_number;
        append_to_trace(outcome.trace, verdict, cycle.cycle_number);
        if (verdict.kind == Verdict::Kind::knee_onset) {
            outcome.knee_onset = verdict.cycle;
            outcome.knee_step = cycle.cycle_number;
            break; // terminal: the rest of the stream cannot change the verdict
        }
    }
    if (detector.phase() != KneeDetector::Phase::warming_up) outcome.ucl = detector.ucl();
    return outcome;
}

std::vector<DetectionOutcome> detect_fleet(const std::vector<BatteryData>& batteries,
                                           const DetectorConfig& cfg, std::size_t workers) {
    std::vector<DetectionOutcome> outcomes(batteries.size());
    parallel_for(batteries.size(), workers,
                 [&](std::size_t i) { outcomes[i] = detect_battery(batteries[i], cfg); });
    return outcomes;
}

std::size_t ModelStore::index_for(Category category) const {
    for (std::size_t i = 0; i < models.size(); ++i)
        if (models[i].category == category_name(category)) return i;
    fail(Errc::no_model_for_category,
         std::string("no model in the store serves category ") + category_name(category));
}

EstimationOutcome estimate_battery(const BatteryData& battery, const DetectorConfig& cfg,
                                   const FleetModelFile& fleet, const ModelStore& store) {
    EstimationOutcome outcome;
    outcome.detection = detect_battery(battery, cfg);
    if (!outcome.detection.knee_onset) return outcome; // no knee, nothing to estimate

    const CycleNumber knee = *outcome.detection.knee_onset;
    outcome.category = classify_battery(fleet.gmm, fleet.categories, double(knee));
    const std::size_t index = store.index_for(*outcome.category);
    const SohModel& model = store.models[index];
    outcome.model_source = index < store.sources.size() ? store.sources[index] : "";

    // The category models are trained on stage-2 cycles only, so estimating past the
    // expected end of life would extrapolate outside their range. Cap the window at the
    // fleet line's EOL prediction for this knee (the line maps knee onset to EOL).
    CycleNumber horizon = battery.cycles.back().cycle_number;
    const double predicted_eol = fleet.line.predict(double(knee));
    if (std::isfinite(predicted_eol) && predicted_eol < double(horizon))
        horizon = std::max(knee, CycleNumber(std::llround(predicted_eol)));

    const ReferenceCycle reference{battery.cycles.front()};
    bool full_truth = battery.soh.has_value();
    double sum_sq = 0.0;
    for (const DischargeCycle& cycle : battery.cycles) {
        if (cycle.cycle_number < knee || cycle.cycle_number > horizon) continue;
        const SynchronizedCycle sync =
            synchronize_cycle(reference, cycle, dtw_align(reference, cycle));
        EstimateRow row;
        row.cycle = cycle.cycle_number;
        row.estimate = predict(model, sync);
        if (battery.soh && std::size_t(cycle.cycle_number) <= battery.soh->size()) {
            row.truth = battery.soh->at_cycle(cycle.cycle_number);
            const double diff = row.estimate - *row.truth;
            sum_sq += diff * diff;
        } else {
            full_truth = false;
        }
        outcome.estimates.push_back(row);
    }
    if (full_truth && !outcome.estimates.empty())
        outcome.rmse = std::sqrt(sum_sq / double(outcome.estimates.size()));
    return outcome;
}

std::vector<EstimationOutcome> estimate_fleet(const std::vector<BatteryData>& batteries,
                                              const DetectorConfig& cfg,
                                              const FleetModelFile& fleet, const ModelStore& store,
                                              std::size_t workers) {
    std::vector<EstimationOutcome> outcomes(batteries.size());
    parallel_for(batteries.size(), workers, [&](std::size_t i) {
        outcomes[i] = estimate_battery(batteries[i], cfg, fleet, store);
    });
    return outcomes;
}

void write_detect_report(const std::string& path, const std::vector<DetectionOutcome>& outcomes,
                         const RunManifest& manifest) {
    json j = report_skeleton("detect", manifest);
    for (const DetectionOutcome& outcome : outcomes)
        j["batteries"].push_back(detection_to_json(outcome));
    dump_report(path, j);
}

void write_estimate_report(const std::string& path, const std::vector<EstimationOutcome>& outcomes,
                           const RunManifest& manifest) {
    json j = report_skeleton("estimate", manifest);
    for (const EstimationOutcome& outcome : outcomes) {
        json entry{{"detection", detection_to_json(outcome.detection)},
                   {"category", nullptr},
                   {"model_source", outcome.model_source},
                   {"rmse", nullptr},
                   {"estimates", json::array()}};
        if (outcome.category) entry["category"] = category_name(*outcome.category);
        if (outcome.rmse) entry["rmse"] = *outcome.rmse;
        for (const EstimateRow& row : outcome.estimates) {
            json r{{"cycle", row.cycle}, {"estimate", row.estimate}, {"truth", nullptr}};
            if (row.truth) r["truth"] = *row.truth;
            entry["estimates"].push_back(std::move(r));
        }
        j["batteries"].push_back(std::move(entry));
    }
    dump_report(path, j);
}

void write_estimate_csv(const std::string& path, const std::vector<EstimationOutcome>& outcomes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(Errc::io_error, "cannot open " + path + " for writing");
    out << "battery_id,cycle_number,soh_truth,soh_estimate\n";
    for (const EstimationOutcome& outcome : outcomes)
        for (const EstimateRow& row : outcome.estimates) {
            out << outcome.detection.battery_id << ',' << row.cycle << ',';
            if (row.truth) out << csv_double(*row.truth);
            out << ',' << csv_double(row.estimate) << '\n';
        }
    if (!out) fail(Errc::io_error, "failed writing " + path);
}

void report_to_csv(const std::string& report_path, const std::string& csv_path) {
    std::ifstream in(report_path, std::ios::binary);
    if (!in) fail(Errc::io_error, "cannot open " + report_path + " for reading");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        fail(Errc::bad_artifact, report_path + ": " + e.what());
    }
    if (j.value("kind", "") != "report")
        fail(Errc::bad_artifact, report_path + ": not a report artifact");

    std::ofstream out(csv_path, std::ios::binary);
    if (!out) fail(Errc::io_error, "cannot open " + csv_path + " for writing");
    try {
        if (j.at("report") == "estimate") {
            out << "battery_id,cycle_number,soh_truth,soh_estimate\n";
            for (const json& battery : j.at("batteries")) {
                const std::string id = battery.at("detection").at("battery_id").get<std::string>();
                for (const json& row : battery.at("estimates")) {
                    out << id << ',' << row.at("cycle").get<CycleNumber>() << ',';
                    if (!row.at("truth").is_null())
                        out << csv_double(row.at("truth").get<double>());
                    out << ',' << csv_double(row.at("estimate").get<double>()) << '\n';
                }
            }
        } else if (j.at("report") == "detect") {
            out << "battery_id,cycles_seen,ucl,knee_onset,knee_step\n";
            for (const json& battery : j.at("batteries")) {
                out << battery.at("battery_id").get<std::string>() << ','
                    << battery.at("cycles_seen").get<CycleNumber>() << ','
                    << csv_double(battery.at("ucl").get<double>()) << ',';
                if (!battery.at("knee_onset").is_null())
                    out << battery.at("knee_onset").get<CycleNumber>();
                out << ',';
                if (!battery.at("knee_step").is_null())
                    out << battery.at("knee_step").get<CycleNumber>();
                out << '\n';
            }
        } else {
            fail(Errc::bad_artifact, report_path + ": unknown report type");
        }
    } catch (const json::exception& e) {
        fail(Errc::bad_artifact, report_path + ": " + e.what());
    }
    if (!out) fail(Errc::io_error, "failed writing " + csv_path);
}

} // namespace kneespot
