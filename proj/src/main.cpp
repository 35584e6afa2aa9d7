#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include <CLI11.hpp>
#include <json.hpp>

#include "kneespot/io.hpp"
#include "kneespot/pipeline.hpp"
#include "kneespot/synthetic.hpp"

using namespace kneespot;
using nlohmann::json;

namespace {

/// Values in the config file override flags, which override defaults. Each
/// assign call replaces the variable when the file carries the key.
struct ConfigFile {
    json values = json::object();

    void load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) fail(Errc::io_error, "cannot open " + path + " for reading");
        try {
            in >> values;
        } catch (const json::exception& e) {
            fail(Errc::bad_artifact, path + ": " + e.what());
        }
        if (!values.is_object()) fail(Errc::bad_artifact, path + ": expected a JSON object");
    }

    template <typename T> void assign(const char* key, T& target) const {
        if (values.contains(key)) target = values.at(key).get<T>();
    }
};

Normalization parse_normalization(const std::string& name) {
    if (name == "plain") return Normalization::none;
    if (name == "zscore") return Normalization::z_score;
    fail(Errc::out_of_range, "normalization must be 'plain' or 'zscore', got '" + name + "'");
}

Category parse_category(const std::string& name) {
    if (name == category_name(Category::long_range)) return Category::long_range;
    if (name == category_name(Category::short_range)) return Category::short_range;
    fail(Errc::out_of_range, "category must be 'long_range' or 'short_range', got '" + name + "'");
}

/// Flags shared by every command that runs the detector.
struct DetectorFlags {
    std::size_t warmup_cycles = DetectorConfig{}.warmup_cycles;
    std::size_t cycle_lag = DetectorConfig{}.cycle_lag;
    double ucl_sigma_multiplier = DetectorConfig{}.ucl_sigma_multiplier;
    std::string normalization = "plain";

    void add_to(CLI::App& cmd) {
        cmd.add_option("--warmup-cycles", warmup_cycles, "Warm-up length K");
        cmd.add_option("--cycle-lag", cycle_lag, "Cycle lag f (query spans f cycles)");
        cmd.add_option("--ucl-sigma-multiplier", ucl_sigma_multiplier,
                       "Control-limit width in warm-up standard deviations");
        cmd.add_option("--normalization", normalization,
                       "Subsequence distance normalization: plain or zscore");
    }
    void apply(const ConfigFile& config) {
        config.assign("warmup_cycles", warmup_cycles);
        config.assign("cycle_lag", cycle_lag);
        config.assign("ucl_sigma_multiplier", ucl_sigma_multiplier);
        config.assign("normalization", normalization);
    }
    DetectorConfig build() const {
        DetectorConfig cfg;
        cfg.warmup_cycles = warmup_cycles;
        cfg.cycle_lag = cycle_lag;
        cfg.ucl_sigma_multiplier = ucl_sigma_multiplier;
        cfg.normalization = parse_normalization(normalization);
        cfg.validate();
        return cfg;
    }
    json snapshot() const {
        return {{"warmup_cycles", warmup_cycles},
                {"cycle_lag", cycle_lag},
                {"ucl_sigma_multiplier", ucl_sigma_multiplier},
                {"normalization", normalization}};
    }
};

struct RegressorFlags {
    std::vector<std::size_t> lstm_layer_sizes = RegressorConfig{}.lstm_layer_sizes;
    std::size_t dense_size = RegressorConfig{}.dense_size;
    double learning_rate = RegressorConfig{}.learning_rate;
    std::size_t epochs = RegressorConfig{}.epochs;
    std::size_t plateau_epochs = RegressorConfig{}.plateau_epochs;
    std::uint64_t seed = RegressorConfig{}.seed;

    void add_to(CLI::App& cmd) {
        cmd.add_option("--lstm-layer-sizes", lstm_layer_sizes,
                       "Hidden sizes of the stacked recurrent layers");
        cmd.add_option("--dense-size", dense_size, "Dense layer width");
        cmd.add_option("--learning-rate", learning_rate, "Optimizer step size");
        cmd.add_option("--epochs", epochs, "Training epochs");
        cmd.add_option("--plateau-epochs", plateau_epochs,
                       "Stop after this many epochs without improvement");
        cmd.add_option("--seed", seed, "Weight initialization seed");
    }
    void apply(const ConfigFile& config) {
        config.assign("lstm_layer_sizes", lstm_layer_sizes);
        config.assign("dense_size", dense_size);
        config.assign("learning_rate", learning_rate);
        config.assign("epochs", epochs);
        config.assign("plateau_epochs", plateau_epochs);
        config.assign("seed", seed);
    }
    RegressorConfig build() const {
        RegressorConfig cfg;
        cfg.lstm_layer_sizes = lstm_layer_sizes;
        cfg.dense_size = dense_size;
        cfg.learning_rate = learning_rate;
        cfg.epochs = epochs;
        cfg.plateau_epochs = plateau_epochs;
        cfg.seed = seed;
        cfg.validate();
        return cfg;
    }
    json snapshot() const {
        return {{"lstm_layer_sizes", lstm_layer_sizes}, {"dense_size", dense_size},
                {"learning_rate", learning_rate},       {"epochs", epochs},
                {"plateau_epochs", plateau_epochs},     {"seed", seed}};
    }
};

RunManifest make_manifest(json config, std::map<std::string, std::string> hashes) {
    RunManifest manifest;
    manifest.config_json = config.dump();
    manifest.input_hashes = std::move(hashes);
    return manifest;
}

int cmd_synth(const std::string& out, const std::string& truth_out, std::size_t batteries,
              std::uint64_t seed, SynthSpec base, CycleNumber knee_spread, double eol_threshold,
              bool no_capacity) {
    std::mt19937_64 jitter_rng(seed);
    std::vector<BatteryData> fleet;
    json truth = json::array();
    for (std::size_t b = 0; b < batteries; ++b) {
        SynthSpec spec = base;
        spec.seed = seed + b;
        if (knee_spread > 0) {
            std::uniform_int_distribution<CycleNumber> jitter(-knee_spread, knee_spread);
            spec.knee_cycle = std::max<CycleNumber>(1, base.knee_cycle + jitter(jitter_rng));
        }
        const SynthBattery battery = generate_battery(spec, eol_threshold);

        char id[16];
        std::snprintf(id, sizeof(id), "SYN%03zu", b + 1);
        BatteryData data;
        data.battery_id = id;
        data.cycles = battery.cycles;
        if (!no_capacity) data.soh = battery.soh;
        fleet.push_back(std::move(data));

        json entry{{"battery_id", id},
                   {"knee_cycle", spec.knee_cycle},
                   {"cycle_count", spec.cycle_count},
                   {"knee_truth", nullptr},
                   {"eol_truth", nullptr}};
        if (battery.knee_truth) entry["knee_truth"] = *battery.knee_truth;
        if (battery.eol_truth) entry["eol_truth"] = *battery.eol_truth;
        truth.push_back(std::move(entry));
    }
    emit_csv(out, fleet);
    std::cout << "wrote " << fleet.size() << " batteries to " << out << '\n';

    if (!truth_out.empty()) {
        const json sidecar{{"kind", "synth_truth"},
                           {"format_version", kFormatVersion},
                           {"eol_threshold", eol_threshold},
                           {"batteries", std::move(truth)}};
        std::ofstream sidecar_out(truth_out, std::ios::binary);
        if (!sidecar_out) fail(Errc::io_error, "cannot open " + truth_out + " for writing");
        sidecar_out << sidecar.dump(2) << '\n';
        std::cout << "wrote ground truth to " << truth_out << '\n';
    }
    return 0;
}

int cmd_detect(const std::string& input, const std::string& out, const DetectorFlags& flags,
               double nominal, std::size_t jobs) {
    const DetectorConfig cfg = flags.build();
    const std::vector<BatteryData> batteries = ingest(input, nominal);
    const std::vector<DetectionOutcome> outcomes = detect_fleet(batteries, cfg, jobs);

    json config = flags.snapshot();
    config["command"] = "detect";
    config["nominal_capacity"] = nominal;
    write_detect_report(out, outcomes, make_manifest(config, {{"input", hash_file(input)}}));

    for (const DetectionOutcome& outcome : outcomes) {
        std::cout << outcome.battery_id << ": ";
        if (outcome.knee_onset)
            std::cout << "knee onset at cycle " << *outcome.knee_onset << " (declared at cycle "
                      << *outcome.knee_step << ")\n";
        else
            std::cout << verdict_kind_name(outcome.trace.empty() ? Verdict::Kind::warming
                                                                 : outcome.trace.back().kind)
                      << " after " << outcome.cycles_seen << " cycles\n";
    }
    std::cout << "report: " << out << '\n';
    return 0;
}

int cmd_fleet(const std::string& input, const std::string& out, std::uint64_t seed) {
    const std::vector<FleetPoint> points = read_fleet_table(input);
    if (points.size() < 4)
        fail(Errc::too_few_batteries,
             "fleet fitting needs at least 4 batteries, got " + std::to_string(points.size()));

    FleetModelFile file;
    file.line = fit_line(points);
    std::vector<std::array<double, 2>> xy;
    for (const FleetPoint& p : points) xy.push_back({double(p.knee_onset), double(p.eol)});
    file.gmm = fit_gmm(xy, 2, seed);
    file.categories = categorize_components(file.gmm);

    const json config{{"command", "fleet"}, {"components", 2}, {"seed", seed}};
    file.manifest = make_manifest(config, {{"input", hash_file(input)}});
    save_fleet_model(out, file);

    std::cout << "fitted " << points.size() << " batteries: EOL = " << file.line.slope
              << " * knee + " << file.line.intercept << " (R^2 " << file.line.r_squared << ")\n"
              << "category boundary at EOL " << file.categories.eol_boundary << "\n"
              << "model: " << out << '\n';
    return 0;
}

int cmd_train(const std::string& input, const std::string& out, std::string battery_id,
              CycleNumber knee, CycleNumber eol, const std::string& category, bool full_life,
              const RegressorFlags& flags, double nominal) {
    const RegressorConfig cfg = flags.build();
    const Category cat = parse_category(category);
    const std::vector<BatteryData> batteries = ingest(input, nominal);

    const BatteryData* battery = nullptr;
    if (battery_id.empty()) {
        battery = &batteries.front();
        battery_id = battery->battery_id;
    } else {
        for (const BatteryData& b : batteries)
            if (b.battery_id == battery_id) battery = &b;
        if (!battery) fail(Errc::out_of_range, "battery " + battery_id + " not in " + input);
    }
    if (!battery->soh)
        fail(Errc::missing_soh, "battery " + battery_id + " carries no capacity column");

    const CycleNumber last = battery->cycles.back().cycle_number;
    if (knee < 1 || eol <= knee || eol > last)
        fail(Errc::range_out_of_bounds, "need 1 <= knee < eol <= " + std::to_string(last) +
                                            ", got knee " + std::to_string(knee) + ", eol " +
                                            std::to_string(eol));

    const CycleNumber from = full_life ? 1 : knee;
    const ReferenceCycle reference{battery->cycles.front()};
    std::vector<SynchronizedCycle> training;
    for (const DischargeCycle& cycle : battery->cycles) {
        if (cycle.cycle_number < from || cycle.cycle_number > eol) continue;
        training.push_back(synchronize_cycle(reference, cycle, dtw_align(reference, cycle)));
    }

    SohModel model = train(training, *battery->soh, cfg);
    model.category = category_name(cat);
    model.battery_id = battery_id;
    model.training_span = full_life ? "full_life" : "stage2";

    std::vector<double> estimates, truth;
    for (const SynchronizedCycle& cycle : training) {
        estimates.push_back(predict(model, cycle));
        truth.push_back(battery->soh->at_cycle(cycle.cycle_number));
    }
    const double train_rmse = rmse(estimates, truth);

    json config = flags.snapshot();
    config["command"] = "train";
    config["battery_id"] = battery_id;
    config["knee"] = knee;
    config["eol"] = eol;
    config["training_span"] = model.training_span;
    config["nominal_capacity"] = nominal;
    save_soh_model(out, model, make_manifest(config, {{"input", hash_file(input)}}));

    std::cout << "trained " << model.training_span << " model on " << training.size()
              << " cycles of " << battery_id << " (epochs run " << model.epoch_loss.size()
              << ", training RMSE " << train_rmse << ")\n"
              << "model: " << out << '\n';
    return 0;
}

int cmd_estimate(const std::string& input, const std::string& fleet_path,
                 std::vector<std::string> model_paths, const std::string& models_dir,
                 const std::string& out, const std::string& plot, const DetectorFlags& flags,
                 double nominal, std::size_t jobs) {
    const DetectorConfig cfg = flags.build();
    const FleetModelFile fleet = load_fleet_model(fleet_path);

    if (!models_dir.empty()) {
        std::vector<std::string> found;
        for (const auto& entry : std::filesystem::directory_iterator(models_dir))
            if (entry.is_regular_file() && entry.path().extension() == ".json")
                found.push_back(entry.path().string());
        std::sort(found.begin(), found.end());
        model_paths.insert(model_paths.end(), found.begin(), found.end());
    }
    if (model_paths.empty())
        fail(Errc::no_model_for_category, "no model files given (--model / --models-dir)");

    ModelStore store;
    std::map<std::string, std::string> hashes{{"input", hash_file(input)},
                                              {"fleet_model", hash_file(fleet_path)}};
    for (const std::string& path : model_paths) {
        store.models.push_back(load_soh_model(path));
        store.sources.push_back(path);
        hashes["model:" + path] = hash_file(path);
    }

    const std::vector<BatteryData> batteries = ingest(input, nominal);
    const std::vector<EstimationOutcome> outcomes = estimate_fleet(batteries, cfg, fleet, store, jobs);

    json config = flags.snapshot();
    config["command"] = "estimate";
    config["nominal_capacity"] = nominal;
    write_estimate_report(out, outcomes, make_manifest(config, hashes));
    if (!plot.empty()) write_estimate_csv(plot, outcomes);

    for (const EstimationOutcome& outcome : outcomes) {
        std::cout << outcome.detection.battery_id << ": ";
        if (!outcome.detection.knee_onset) {
            std::cout << "no knee onset; no estimation performed\n";
            continue;
        }
        std::cout << "knee at " << *outcome.detection.knee_onset << ", category "
                  << category_name(*outcome.category) << ", " << outcome.estimates.size()
                  << " cycles estimated";
        if (outcome.rmse) std::cout << ", RMSE " << *outcome.rmse;
        std::cout << '\n';
    }
    std::cout << "report: " << out << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Battery knee-onset detection and SOH estimation toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string("kneespot ") + kToolVersion);

    // synth ------------------------------------------------------------
    auto* synth = app.add_subcommand("synth", "Generate synthetic battery cycle data as CSV");
    std::string synth_out, synth_truth;
    std::size_t synth_batteries = 1;
    std::uint64_t synth_seed = 1;
    SynthSpec synth_spec;
    CycleNumber synth_spread = 0;
    double synth_eol_threshold = 0.8;
    bool synth_no_capacity = false;
    synth->add_option("--out", synth_out, "Output CSV path")->required();
    synth->add_option("--truth", synth_truth, "Ground-truth JSON sidecar path");
    synth->add_option("--batteries", synth_batteries, "Number of batteries");
    synth->add_option("--seed", synth_seed, "Base seed; battery b uses seed+b");
    synth->add_option("--cycle-count", synth_spec.cycle_count, "Cycles per battery");
    synth->add_option("--knee-cycle", synth_spec.knee_cycle, "Knee onset cycle");
    synth->add_option("--knee-spread", synth_spread, "Uniform +/- jitter on the knee cycle");
    synth->add_option("--base-cycle-length", synth_spec.base_cycle_length,
                      "Samples per healthy cycle");
    synth->add_option("--stage1-fade", synth_spec.stage1_fade_per_cycle,
                      "Pre-knee SOH fade per cycle");
    synth->add_option("--post-knee-acceleration", synth_spec.post_knee_acceleration,
                      "Quadratic post-knee fade coefficient");
    synth->add_option("--noise-sigma", synth_spec.noise_sigma, "Voltage noise sigma");
    synth->add_option("--length-soh-coupling", synth_spec.length_soh_coupling,
                      "Fraction of capacity loss that shows up as lost runtime (0, 1]");
    synth->add_option("--nominal-capacity", synth_spec.nominal_capacity, "Nominal capacity (Ah)");
    synth->add_option("--eol-threshold", synth_eol_threshold, "SOH defining end of life");
    synth->add_flag("--no-capacity", synth_no_capacity,
                    "Omit the capacity column (pure online stream)");

    // detect -----------------------------------------------------------
    auto* detect = app.add_subcommand("detect", "Find knee onsets in battery cycle streams");
    std::string detect_input, detect_out, detect_config;
    DetectorFlags detect_flags;
    double detect_nominal = 1.1;
    std::size_t detect_jobs = 0;
    detect->add_option("--input", detect_input, "Cycle CSV path")->required();
    detect->add_option("--out", detect_out, "Report JSON path")->required();
    detect_flags.add_to(*detect);
    detect->add_option("--nominal-capacity", detect_nominal, "Nominal capacity (Ah)");
    detect->add_option("--jobs", detect_jobs, "Worker threads (0 = auto)");
    detect->add_option("--config", detect_config,
                       "JSON config file; its values override the flags");

    // fleet ------------------------------------------------------------
    auto* fleet = app.add_subcommand("fleet", "Fit the fleet line, mixture, and categories");
    std::string fleet_input, fleet_out;
    std::uint64_t fleet_seed = 1;
    fleet->add_option("--input", fleet_input, "Knee/EOL table CSV path")->required();
    fleet->add_option("--out", fleet_out, "Fleet model JSON path")->required();
    fleet->add_option("--seed", fleet_seed, "Mixture restart seed");

    // train ------------------------------------------------------------
    auto* train_cmd = app.add_subcommand("train", "Train a category SOH model from one battery");
    std::string train_input, train_out, train_battery, train_category, train_config;
    CycleNumber train_knee = 0, train_eol = 0;
    bool train_full_life = false;
    RegressorFlags train_flags;
    double train_nominal = 1.1;
    train_cmd->add_option("--input", train_input, "Cycle CSV path (capacity required)")->required();
    train_cmd->add_option("--out", train_out, "Model JSON path")->required();
    train_cmd->add_option("--battery", train_battery, "Battery id (default: first in file)");
    train_cmd->add_option("--knee", train_knee, "Knee onset cycle")->required();
    train_cmd->add_option("--eol", train_eol, "End-of-life cycle")->required();
    train_cmd->add_option("--category", train_category, "long_range or short_range")->required();
    train_cmd->add_flag("--full-life", train_full_life,
                        "Train on cycles 1..eol instead of knee..eol");
    train_flags.add_to(*train_cmd);
    train_cmd->add_option("--nominal-capacity", train_nominal, "Nominal capacity (Ah)");
    train_cmd->add_option("--config", train_config,
                          "JSON config file; its values override the flags");

    // estimate ----------------------------------------------------------
    auto* estimate = app.add_subcommand("estimate", "Detect, classify, and estimate SOH online");
    std::string est_input, est_fleet, est_models_dir, est_out, est_plot, est_config;
    std::vector<std::string> est_models;
    DetectorFlags est_flags;
    double est_nominal = 1.1;
    std::size_t est_jobs = 0;
    estimate->add_option("--input", est_input, "Cycle CSV path")->required();
    estimate->add_option("--fleet", est_fleet, "Fleet model JSON path")->required();
    estimate->add_option("--model", est_models, "SOH model JSON path (repeatable)");
    estimate->add_option("--models-dir", est_models_dir, "Directory of SOH model JSON files");
    estimate->add_option("--out", est_out, "Report JSON path")->required();
    estimate->add_option("--plot", est_plot, "Plot-ready CSV path");
    est_flags.add_to(*estimate);
    estimate->add_option("--nominal-capacity", est_nominal, "Nominal capacity (Ah)");
    estimate->add_option("--jobs", est_jobs, "Worker threads (0 = auto)");
    estimate->add_option("--config", est_config,
                         "JSON config file; its values override the flags");

    // report -------------------------------------------------------------
    auto* report = app.add_subcommand("report", "Flatten a JSON report to plot-ready CSV");
    std::string report_input, report_out;
    report->add_option("--input", report_input, "Report JSON path")->required();
    report->add_option("--out", report_out, "Output CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*synth)
            return cmd_synth(synth_out, synth_truth, synth_batteries, synth_seed, synth_spec,
                             synth_spread, synth_eol_threshold, synth_no_capacity);
        if (*detect) {
            if (!detect_config.empty()) {
                ConfigFile file;
                file.load(detect_config);
                detect_flags.apply(file);
                file.assign("nominal_capacity", detect_nominal);
                file.assign("jobs", detect_jobs);
            }
            return cmd_detect(detect_input, detect_out, detect_flags, detect_nominal, detect_jobs);
        }
        if (*fleet) return cmd_fleet(fleet_input, fleet_out, fleet_seed);
        if (*train_cmd) {
            if (!train_config.empty()) {
                ConfigFile file;
                file.load(train_config);
                train_flags.apply(file);
                file.assign("nominal_capacity", train_nominal);
            }
            return cmd_train(train_input, train_out, train_battery, train_knee, train_eol,
                             train_category, train_full_life, train_flags, train_nominal);
        }
        if (*estimate) {
            if (!est_config.empty()) {
                ConfigFile file;
                file.load(est_config);
                est_flags.apply(file);
                file.assign("nominal_capacity", est_nominal);
                file.assign("jobs", est_jobs);
            }
            return cmd_estimate(est_input, est_fleet, est_models, est_models_dir, est_out,
                                est_plot, est_flags, est_nominal, est_jobs);
        }
        if (*report) {
            report_to_csv(report_input, report_out);
            std::cout << "wrote " << report_out << '\n';
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.is_io() ? 3 : 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
