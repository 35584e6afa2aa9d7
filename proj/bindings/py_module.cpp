#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "kneespot/detector.hpp"
#include "kneespot/dtw.hpp"
#include "kneespot/error.hpp"
#include "kneespot/fleet.hpp"
#include "kneespot/io.hpp"
#include "kneespot/matrix_profile.hpp"
#include "kneespot/pipeline.hpp"
#include "kneespot/soh.hpp"
#include "kneespot/synthetic.hpp"
#include "kneespot/types.hpp"

namespace py = pybind11;
using namespace kneespot;

namespace {

// Heavy calls work on plain C++ data, so the interpreter lock can be dropped.
constexpr auto nogil = py::call_guard<py::gil_scoped_release>();

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Battery knee-onset detection and state-of-health estimation";
    m.attr("__version__") = kToolVersion;

    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

    // ---- domain types ----
    py::class_<VoltageSample>(m, "VoltageSample")
        .def(py::init<std::int64_t, double>(), py::arg("time_step"), py::arg("voltage"))
        .def_readwrite("time_step", &VoltageSample::time_step)
        .def_readwrite("voltage", &VoltageSample::voltage)
        .def("__repr__", [](const VoltageSample& s) {
            return "VoltageSample(" + std::to_string(s.time_step) + ", " +
                   std::to_string(s.voltage) + ")";
        });

    py::class_<DischargeCycle>(m, "DischargeCycle")
        .def_readonly("cycle_number", &DischargeCycle::cycle_number)
        .def_readonly("samples", &DischargeCycle::samples)
        .def("__len__", &DischargeCycle::length)
        .def("__repr__", [](const DischargeCycle& c) {
            return "DischargeCycle(cycle " + std::to_string(c.cycle_number) + ", " +
                   std::to_string(c.length()) + " samples)";
        });

    m.def(
        "validate_cycle",
        [](CycleNumber number, const std::vector<std::pair<std::int64_t, double>>& raw,
           double voltage_lo, double voltage_hi) {
            return validate_cycle(number, raw, {voltage_lo, voltage_hi});
        },
        py::arg("cycle_number"), py::arg("samples"), py::arg("voltage_lo") = VoltageWindow{}.lo,
        py::arg("voltage_hi") = VoltageWindow{}.hi,
        "Builds a DischargeCycle from (time_step, voltage) pairs, enforcing the "
        "1-based strictly increasing time axis and the plausible voltage window");

    py::class_<SynchronizedCycle>(m, "SynchronizedCycle")
        .def_readonly("cycle_number", &SynchronizedCycle::cycle_number)
        .def_readonly("warped_indices", &SynchronizedCycle::warped_indices)
        .def("__len__", [](const SynchronizedCycle& c) { return c.warped_indices.size(); });

    py::class_<SOHSeries>(m, "SOHSeries")
        .def(py::init([](std::vector<double> values, double nominal_capacity) {
                 SOHSeries series{std::move(values), nominal_capacity};
                 validate_soh(series);
                 return series;
             }),
             py::arg("values"), py::arg("nominal_capacity") = 1.1)
        .def_readonly("values", &SOHSeries::values)
        .def_readonly("nominal_capacity", &SOHSeries::nominal_capacity)
        .def("at_cycle", &SOHSeries::at_cycle, py::arg("cycle"))
        .def("__len__", &SOHSeries::size);

    // ---- DTW synchronization ----
    py::class_<WarpingPath>(m, "WarpingPath")
        .def_readonly("pairs", &WarpingPath::pairs)
        .def_readonly("total_cost", &WarpingPath::total_cost);

    m.def(
        "dtw_align",
        [](const DischargeCycle& reference, const DischargeCycle& cycle) {
            return dtw_align(ReferenceCycle{reference}, cycle);
        },
        py::arg("reference"), py::arg("cycle"), nogil,
        "Optimal warping path between a reference cycle and another cycle");
    m.def(
        "synchronize_cycle",
        [](const DischargeCycle& reference, const DischargeCycle& cycle) {
            const ReferenceCycle ref{reference};
            return synchronize_cycle(ref, cycle, dtw_align(ref, cycle));
        },
        py::arg("reference"), py::arg("cycle"), nogil,
        "Aligns a cycle against the reference and returns the fixed-length "
        "warped time-index trajectory");
    m.def(
        "build_series",
        [](const std::vector<DischargeCycle>& cycles, const DischargeCycle& reference) {
            const DischargeSeries series = build_series(cycles, ReferenceCycle{reference});
            return std::make_pair(series.samples(), series.cycle_length());
        },
        py::arg("cycles"), py::arg("reference"), nogil,
        "Synchronizes every cycle against the reference and concatenates the "
        "trajectories; returns (flat_series, cycle_length)");

    // ---- matrix profile ----
    py::enum_<Normalization>(m, "Normalization")
        .value("plain", Normalization::none)
        .value("z_score", Normalization::z_score);

    py::enum_<DownsampleMode>(m, "DownsampleMode")
        .value("cycle_start", DownsampleMode::cycle_start)
        .value("literal", DownsampleMode::literal);

    py::class_<ProfilePair>(m, "ProfilePair")
        .def_readonly("profile", &ProfilePair::profile)
        .def_readonly("index", &ProfilePair::index)
        .def_readonly("query_length", &ProfilePair::query_length)
        .def_readonly("exclusion_radius", &ProfilePair::exclusion_radius)
        .def("__len__", &ProfilePair::size);

    py::class_<CycleProfile>(m, "CycleProfile")
        .def_readonly("values", &CycleProfile::values)
        .def_readonly("indices", &CycleProfile::indices)
        .def_readonly("cycle_lag", &CycleProfile::cycle_lag)
        .def("__len__", &CycleProfile::size);

    m.def("compute_profile", &compute_profile, py::arg("series"), py::arg("query_length"),
          py::arg("normalization") = Normalization::none, nogil,
          "Self-join matrix profile of a series (reference implementation)");
    m.def("compute_profile_fast", &compute_profile_fast, py::arg("series"),
          py::arg("query_length"), py::arg("normalization") = Normalization::none, nogil,
          "Self-join matrix profile via the streaming-dot-product recursion");
    m.def("cycle_downsample", &cycle_downsample, py::arg("pair"), py::arg("cycle_length"),
          py::arg("cycle_lag"), py::arg("mode") = DownsampleMode::cycle_start,
          "Cycle-granularity view of a sample-level profile");

    // ---- knee-onset detector ----
    py::class_<DetectorConfig>(m, "DetectorConfig")
        .def(py::init([](std::size_t warmup_cycles, std::size_t cycle_lag,
                         double ucl_sigma_multiplier, Normalization normalization,
                         DownsampleMode downsample) {
                 DetectorConfig cfg{warmup_cycles, cycle_lag, ucl_sigma_multiplier, normalization,
                                    downsample};
                 cfg.validate();
                 return cfg;
             }),
             py::arg("warmup_cycles") = 110, py::arg("cycle_lag") = 10,
             py::arg("ucl_sigma_multiplier") = 1.5,
             py::arg("normalization") = Normalization::none,
             py::arg("downsample") = DownsampleMode::cycle_start)
        .def_readonly("warmup_cycles", &DetectorConfig::warmup_cycles)
        .def_readonly("cycle_lag", &DetectorConfig::cycle_lag)
        .def_readonly("ucl_sigma_multiplier", &DetectorConfig::ucl_sigma_multiplier)
        .def_readonly("normalization", &DetectorConfig::normalization)
        .def_readonly("downsample", &DetectorConfig::downsample);

    py::class_<Verdict> verdict(m, "Verdict");
    py::enum_<Verdict::Kind>(verdict, "Kind")
        .value("warming", Verdict::Kind::warming)
        .value("no_change", Verdict::Kind::no_change)
        .value("candidate", Verdict::Kind::candidate)
        .value("knee_onset", Verdict::Kind::knee_onset);
    verdict.def_readonly("kind", &Verdict::kind)
        .def_readonly("cycle", &Verdict::cycle)
        .def("__repr__", [](const Verdict& v) {
            std::string out = std::string("Verdict(") + verdict_kind_name(v.kind);
            if (v.cycle != 0) out += ", cycle " + std::to_string(v.cycle);
            return out + ")";
        });

    py::class_<KneeDetector> detector(m, "KneeDetector");
    py::enum_<KneeDetector::Phase>(detector, "Phase")
        .value("warming_up", KneeDetector::Phase::warming_up)
        .value("monitoring", KneeDetector::Phase::monitoring)
        .value("confirming", KneeDetector::Phase::confirming)
        .value("finished", KneeDetector::Phase::finished);
    detector
        .def(py::init<DetectorConfig>(), py::arg("config") = DetectorConfig{},
             "Online knee-onset detector; feed cycles in order starting from 1")
        .def_static("warm_up", &KneeDetector::warm_up, py::arg("cycles"),
                    py::arg("config") = DetectorConfig{}, nogil)
        .def("step", &KneeDetector::step, py::arg("cycle"), nogil,
             "Processes the next cycle and returns the verdict for this step")
        .def_property_readonly("phase", &KneeDetector::phase)
        .def_property_readonly("config", &KneeDetector::config)
        .def_property_readonly("last_cycle", &KneeDetector::last_cycle)
        .def_property_readonly("ucl", &KneeDetector::ucl)
        .def_property_readonly("profile", &KneeDetector::profile)
        .def_property_readonly("candidate", &KneeDetector::candidate)
        .def_property_readonly("knee_onset", &KneeDetector::knee_onset)
        .def_property_readonly("cycle_length", &KneeDetector::cycle_length);

    // ---- fleet analysis ----
    py::class_<FleetPoint>(m, "FleetPoint")
        .def(py::init([](std::string battery_id, CycleNumber knee_onset, CycleNumber eol) {
                 FleetPoint point{std::move(battery_id), knee_onset, eol};
                 point.validate();
                 return point;
             }),
             py::arg("battery_id"), py::arg("knee_onset"), py::arg("eol"))
        .def_readonly("battery_id", &FleetPoint::battery_id)
        .def_readonly("knee_onset", &FleetPoint::knee_onset)
        .def_readonly("eol", &FleetPoint::eol);

    py::class_<LineFit>(m, "LineFit")
        .def_readonly("slope", &LineFit::slope)
        .def_readonly("intercept", &LineFit::intercept)
        .def_readonly("residuals", &LineFit::residuals)
        .def_readonly("r_squared", &LineFit::r_squared)
        .def("predict", &LineFit::predict, py::arg("knee_onset"));

    m.def("fit_line", &fit_line, py::arg("points"),
          "Least squares of EOL on knee onset over the fleet");
    m.def("r_squared", &r_squared, py::arg("points"), py::arg("fit"),
          "Coefficient of determination of a line on fleet points");

    py::class_<GmmComponent>(m, "GmmComponent")
        .def_readonly("weight", &GmmComponent::weight)
        .def_readonly("mean", &GmmComponent::mean)
        .def_readonly("covariance", &GmmComponent::covariance);

    py::class_<GmmModel>(m, "GmmModel")
        .def_readonly("components", &GmmModel::components)
        .def_readonly("log_likelihood", &GmmModel::log_likelihood)
        .def_readonly("converged", &GmmModel::converged)
        .def_readonly("iterations", &GmmModel::iterations)
        .def_readonly("log_likelihood_trace", &GmmModel::log_likelihood_trace);

    m.def("fit_gmm", &fit_gmm, py::arg("points"), py::arg("component_count") = 2,
          py::arg("seed") = 1, nogil,
          "Expectation-maximization fit of a Gaussian mixture over (knee, EOL) points");
    m.def("component_posterior", &component_posterior, py::arg("model"), py::arg("point"),
          "Per-component membership probabilities of one (knee, EOL) point");
    m.def("knee_marginal_posterior", &knee_marginal_posterior, py::arg("model"),
          py::arg("knee_onset"),
          "Per-component membership probabilities from the knee onset alone");

    py::enum_<Category>(m, "Category")
        .value("long_range", Category::long_range)
        .value("short_range", Category::short_range);

    py::class_<CategoryMap>(m, "CategoryMap")
        .def_readonly("long_range_component", &CategoryMap::long_range_component)
        .def_readonly("short_range_component", &CategoryMap::short_range_component)
        .def_readonly("eol_boundary", &CategoryMap::eol_boundary);

    m.def("category_name", &category_name, py::arg("category"));
    m.def("categorize_components", &categorize_components, py::arg("model"),
          "Assigns the long/short-range roles to a fitted two-component mixture");
    m.def("classify_battery", &classify_battery, py::arg("model"), py::arg("map"),
          py::arg("knee_onset"), "Category of a battery from its knee onset");
    m.def("classify_by_eol", &classify_by_eol, py::arg("map"), py::arg("eol"),
          "Category of a battery from its end of life against the boundary");

    // ---- SOH regression ----
    py::class_<RegressorConfig>(m, "RegressorConfig")
        .def(py::init([](std::vector<std::size_t> lstm_layer_sizes, std::size_t dense_size,
                         double learning_rate, std::size_t epochs, std::size_t plateau_epochs,
                         std::uint64_t seed) {
                 RegressorConfig cfg{std::move(lstm_layer_sizes), dense_size, learning_rate,
                                     epochs,  plateau_epochs,     seed};
                 cfg.validate();
                 return cfg;
             }),
             py::arg("lstm_layer_sizes") = RegressorConfig{}.lstm_layer_sizes,
             py::arg("dense_size") = RegressorConfig{}.dense_size,
             py::arg("learning_rate") = RegressorConfig{}.learning_rate,
             py::arg("epochs") = RegressorConfig{}.epochs,
             py::arg("plateau_epochs") = RegressorConfig{}.plateau_epochs,
             py::arg("seed") = RegressorConfig{}.seed)
        .def_static("full_scale", &RegressorConfig::full_scale,
                    "The large two-layer configuration used for full-scale runs")
        .def_readonly("lstm_layer_sizes", &RegressorConfig::lstm_layer_sizes)
        .def_readonly("dense_size", &RegressorConfig::dense_size)
        .def_readonly("learning_rate", &RegressorConfig::learning_rate)
        .def_readonly("epochs", &RegressorConfig::epochs)
        .def_readonly("plateau_epochs", &RegressorConfig::plateau_epochs)
        .def_readonly("seed", &RegressorConfig::seed);

    py::class_<SohModel>(m, "SohModel")
        .def_readonly("config", &SohModel::config)
        .def_readonly("input_length", &SohModel::input_length)
        .def_readonly("input_scale", &SohModel::input_scale)
        .def_readonly("weights", &SohModel::weights)
        .def_readwrite("category", &SohModel::category)
        .def_readwrite("battery_id", &SohModel::battery_id)
        .def_readwrite("training_span", &SohModel::training_span)
        .def_readonly("trained_from", &SohModel::trained_from)
        .def_readonly("trained_to", &SohModel::trained_to)
        .def_readonly("epoch_loss", &SohModel::epoch_loss);

    m.def("parameter_count", &parameter_count, py::arg("config"));
    m.def("train", &train, py::arg("cycles"), py::arg("targets"),
          py::arg("config") = RegressorConfig{}, nogil,
          "Trains the stacked-recurrence SOH regressor on synchronized cycles");
    m.def("predict", &predict, py::arg("model"), py::arg("cycle"), nogil,
          "SOH estimate for one synchronized cycle");
    m.def("rmse", &rmse, py::arg("estimates"), py::arg("targets"));
    m.def("gradient_check", &gradient_check, py::arg("config"), py::arg("cycles"),
          py::arg("targets"), nogil,
          "Max relative error of analytic vs central-difference gradients");

    // ---- synthetic fleets ----
    py::class_<SynthSpec>(m, "SynthSpec")
        .def(py::init([](double nominal_capacity, double stage1_fade_per_cycle,
                         CycleNumber knee_cycle, double post_knee_acceleration,
                         double voltage_start, double voltage_end, std::size_t base_cycle_length,
                         double noise_sigma, std::uint64_t seed, std::size_t cycle_count,
                         double length_soh_coupling) {
                 SynthSpec spec{nominal_capacity, stage1_fade_per_cycle, knee_cycle,
                                post_knee_acceleration, voltage_start, voltage_end,
                                base_cycle_length, noise_sigma, seed, cycle_count,
                                length_soh_coupling};
                 spec.validate();
                 return spec;
             }),
             py::arg("nominal_capacity") = SynthSpec{}.nominal_capacity,
             py::arg("stage1_fade_per_cycle") = SynthSpec{}.stage1_fade_per_cycle,
             py::arg("knee_cycle") = SynthSpec{}.knee_cycle,
             py::arg("post_knee_acceleration") = SynthSpec{}.post_knee_acceleration,
             py::arg("voltage_start") = SynthSpec{}.voltage_start,
             py::arg("voltage_end") = SynthSpec{}.voltage_end,
             py::arg("base_cycle_length") = SynthSpec{}.base_cycle_length,
             py::arg("noise_sigma") = SynthSpec{}.noise_sigma,
             py::arg("seed") = SynthSpec{}.seed,
             py::arg("cycle_count") = SynthSpec{}.cycle_count,
             py::arg("length_soh_coupling") = SynthSpec{}.length_soh_coupling)
        .def_readonly("knee_cycle", &SynthSpec::knee_cycle)
        .def_readonly("cycle_count", &SynthSpec::cycle_count)
        .def_readonly("seed", &SynthSpec::seed)
        .def_readonly("length_soh_coupling", &SynthSpec::length_soh_coupling);

    py::class_<SynthBattery>(m, "SynthBattery")
        .def_readonly("cycles", &SynthBattery::cycles)
        .def_readonly("soh", &SynthBattery::soh)
        .def_readonly("knee_truth", &SynthBattery::knee_truth)
        .def_readonly("eol_truth", &SynthBattery::eol_truth);

    m.def("generate_battery", &generate_battery, py::arg("spec"),
          py::arg("eol_threshold") = 0.8, nogil,
          "Three-stage degradation battery with exact SOH and knee/EOL labels");
    m.def("label_knee", &label_knee, py::arg("soh"), py::arg("alpha"),
          "First cycle whose per-cycle SOH drop exceeds alpha");
    m.def("label_eol", &label_eol, py::arg("soh"), py::arg("threshold") = 0.8,
          "First cycle with SOH below the threshold");

    // ---- files and pipelines ----
    py::class_<BatteryData>(m, "BatteryData")
        .def(py::init([](std::string battery_id, std::vector<DischargeCycle> cycles,
                         std::optional<SOHSeries> soh) {
                 return BatteryData{std::move(battery_id), std::move(cycles), std::move(soh)};
             }),
             py::arg("battery_id"), py::arg("cycles"), py::arg("soh") = std::optional<SOHSeries>{})
        .def_readonly("battery_id", &BatteryData::battery_id)
        .def_readonly("cycles", &BatteryData::cycles)
        .def_readonly("soh", &BatteryData::soh);

    m.def("ingest", &ingest, py::arg("path"), py::arg("nominal_capacity") = 1.1, nogil,
          "Reads a cycle CSV; returns batteries sorted by id");
    m.def("emit_csv", &emit_csv, py::arg("path"), py::arg("batteries"), nogil,
          "Writes batteries in the same CSV format ingest reads");
    m.def("read_fleet_table", &read_fleet_table, py::arg("path"));
    m.def("write_fleet_table", &write_fleet_table, py::arg("path"), py::arg("points"));

    py::class_<RunManifest>(m, "RunManifest")
        .def(py::init<>())
        .def_readwrite("tool_version", &RunManifest::tool_version)
        .def_readwrite("config_json", &RunManifest::config_json)
        .def_readwrite("input_hashes", &RunManifest::input_hashes);

    py::class_<FleetModelFile>(m, "FleetModelFile")
        .def(py::init([](LineFit line, GmmModel gmm, CategoryMap categories) {
                 return FleetModelFile{std::move(line), std::move(gmm), categories, {}};
             }),
             py::arg("line"), py::arg("gmm"), py::arg("categories"))
        .def_readonly("line", &FleetModelFile::line)
        .def_readonly("gmm", &FleetModelFile::gmm)
        .def_readonly("categories", &FleetModelFile::categories)
        .def_readonly("manifest", &FleetModelFile::manifest);

    m.def("save_fleet_model", &save_fleet_model, py::arg("path"), py::arg("file"));
    m.def("load_fleet_model", &load_fleet_model, py::arg("path"));
    m.def("save_soh_model", &save_soh_model, py::arg("path"), py::arg("model"),
          py::arg("manifest") = RunManifest{});
    m.def(
        "load_soh_model", [](const std::string& path) { return load_soh_model(path); },
        py::arg("path"));

    py::class_<VerdictSpan>(m, "VerdictSpan")
        .def_readonly("kind", &VerdictSpan::kind)
        .def_readonly("first", &VerdictSpan::first)
        .def_readonly("last", &VerdictSpan::last)
        .def_readonly("cycle", &VerdictSpan::cycle);

    py::class_<DetectionOutcome>(m, "DetectionOutcome")
        .def_readonly("battery_id", &DetectionOutcome::battery_id)
        .def_readonly("cycles_seen", &DetectionOutcome::cycles_seen)
        .def_readonly("ucl", &DetectionOutcome::ucl)
        .def_readonly("trace", &DetectionOutcome::trace)
        .def_readonly("knee_onset", &DetectionOutcome::knee_onset)
        .def_readonly("knee_step", &DetectionOutcome::knee_step);

    m.def("detect_battery", &detect_battery, py::arg("battery"),
          py::arg("config") = DetectorConfig{}, nogil,
          "Streams one battery through a fresh detector");
    m.def("detect_fleet", &detect_fleet, py::arg("batteries"),
          py::arg("config") = DetectorConfig{}, py::arg("workers") = std::size_t{0}, nogil,
          "Detects over a fleet on a worker pool; output order follows input order");

    py::class_<ModelStore>(m, "ModelStore")
        .def(py::init([](std::vector<SohModel> models, std::vector<std::string> sources) {
                 return ModelStore{std::move(models), std::move(sources)};
             }),
             py::arg("models"), py::arg("sources") = std::vector<std::string>{})
        .def_readonly("models", &ModelStore::models)
        .def_readonly("sources", &ModelStore::sources)
        .def("index_for", &ModelStore::index_for, py::arg("category"));

    py::class_<EstimateRow>(m, "EstimateRow")
        .def_readonly("cycle", &EstimateRow::cycle)
        .def_readonly("estimate", &EstimateRow::estimate)
        .def_readonly("truth", &EstimateRow::truth);

    py::class_<EstimationOutcome>(m, "EstimationOutcome")
        .def_readonly("detection", &EstimationOutcome::detection)
        .def_readonly("category", &EstimationOutcome::category)
        .def_readonly("model_source", &EstimationOutcome::model_source)
        .def_readonly("estimates", &EstimationOutcome::estimates)
        .def_readonly("rmse", &EstimationOutcome::rmse);

    m.def("estimate_battery", &estimate_battery, py::arg("battery"), py::arg("config"),
          py::arg("fleet"), py::arg("store"), nogil,
          "Detect, classify, and estimate SOH from the knee onset to the "
          "fleet line's predicted end of life");
    m.def("estimate_fleet", &estimate_fleet, py::arg("batteries"), py::arg("config"),
          py::arg("fleet"), py::arg("store"), py::arg("workers") = std::size_t{0}, nogil);
}
