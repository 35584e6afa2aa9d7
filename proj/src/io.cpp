#include "kneespot/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace kneespot {

namespace {

using nlohmann::json;

constexpr const char* kCycleHeader = "battery_id,cycle_number,time_step,voltage";
constexpr const char* kFleetHeader = "battery_id,knee_onset,eol";

/// Shortest representation that parses back to the same double.
std::string format_double(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, end);
}

[[noreturn]] void bad_row(std::size_t line, const std::string& what) {
    fail(Errc::malformed_row, "line " + std::to_string(line) + ": " + what);
}

std::vector<std::string> split_row(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

double parse_double(const std::string& field, std::size_t line, const char* what) {
    double value = 0.0;
    const auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc{} || end != field.data() + field.size())
        bad_row(line, std::string(what) + " '" + field + "' is not a number");
    return value;
}

std::int64_t parse_int(const std::string& field, std::size_t line, const char* what) {
    std::int64_t value = 0;
    const auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc{} || end != field.data() + field.size())
        bad_row(line, std::string(what) + " '" + field + "' is not an integer");
    return value;
}

std::ifstream open_for_read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::io_error, "cannot open " + path + " for reading");
    return in;
}

std::ofstream open_for_write(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(Errc::io_error, "cannot open " + path + " for writing");
    return out;
}

/// Reads one line, tolerating CRLF endings; false at end of file.
bool read_line(std::istream& in, std::string& line) {
    if (!std::getline(in, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
}

struct PendingCycle {
    CycleNumber number = 0;
    std::vector<std::pair<std::int64_t, double>> samples;
    std::optional<double> capacity;
};

struct PendingBattery {
    std::string id;
    std::vector<DischargeCycle> cycles;
    std::vector<std::optional<double>> capacities; // one per cycle
};

BatteryData finish_battery(PendingBattery&& pending, double nominal_capacity) {
    BatteryData battery;
    battery.battery_id = std::move(pending.id);
    battery.cycles = std::move(pending.cycles);

    const std::size_t with_capacity = std::size_t(
        std::count_if(pending.capacities.begin(), pending.capacities.end(),
                      [](const std::optional<double>& c) { return c.has_value(); }));
    if (with_capacity == pending.capacities.size() && with_capacity > 0) {
        SOHSeries soh;
        soh.nominal_capacity = nominal_capacity;
        for (const auto& capacity : pending.capacities)
            soh.values.push_back(*capacity / nominal_capacity);
        validate_soh(soh);
        battery.soh = std::move(soh);
    } else if (with_capacity != 0) {
        fail(Errc::missing_soh, "battery " + battery.battery_id + " has capacity for only " +
                                    std::to_string(with_capacity) + " of " +
                                    std::to_string(pending.capacities.size()) + " cycles");
    }
    return battery;
}

json manifest_to_json(const RunManifest& manifest) {
    json config;
    try {
        config = json::parse(manifest.config_json);
    } catch (const json::exception& e) {
        fail(Errc::bad_artifact, std::string("manifest config is not valid JSON: ") + e.what());
    }
    return json{{"tool_version", manifest.tool_version},
                {"config", std::move(config)},
                {"input_hashes", manifest.input_hashes}};
}

RunManifest manifest_from_json(const json& j) {
    RunManifest manifest;
    manifest.tool_version = j.at("tool_version").get<std::string>();
    manifest.config_json = j.at("config").dump();
    manifest.input_hashes = j.at("input_hashes").get<std::map<std::string, std::string>>();
    return manifest;
}

json load_artifact(const std::string& path, const char* expected_kind) {
    auto in = open_for_read(path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        fail(Errc::bad_artifact, path + ": " + e.what());
    }
    if (!j.is_object() || j.value("kind", "") != expected_kind)
        fail(Errc::bad_artifact,
             path + ": expected a '" + std::string(expected_kind) + "' artifact");
    if (j.value("format_version", -1) != kFormatVersion)
        fail(Errc::bad_artifact, path + ": unsupported format version");
    return j;
}

void dump_artifact(const std::string& path, const json& j) {
    auto out = open_for_write(path);
    out << j.dump(2) << '\n';
    if (!out) fail(Errc::io_error, "failed writing " + path);
}

} // namespace

std::vector<BatteryData> ingest(const std::string& path, double nominal_capacity) {
    auto in = open_for_read(path);

    std::string line;
    if (!read_line(in, line)) fail(Errc::missing_header, path + " is empty");
    bool has_capacity = false;
    if (line == std::string(kCycleHeader) + ",capacity")
        has_capacity = true;
    else if (line != kCycleHeader)
        fail(Errc::missing_header, "expected header '" + std::string(kCycleHeader) +
                                       "[,capacity]', got '" + line + "'");

    std::vector<BatteryData> batteries;
    std::vector<std::string> seen_ids;
    PendingBattery battery;
    PendingCycle cycle;
    const std::size_t columns = has_capacity ? 5 : 4;

    auto close_cycle = [&] {
        if (cycle.samples.empty()) return;
        const CycleNumber expected = CycleNumber(battery.cycles.size()) + 1;
        if (cycle.number != expected)
            fail(Errc::non_contiguous_cycles, "battery " + battery.id + ": expected cycle " +
                                                  std::to_string(expected) + ", got " +
                                                  std::to_string(cycle.number));
        battery.cycles.push_back(validate_cycle(cycle.number, cycle.samples));
        battery.capacities.push_back(cycle.capacity);
        cycle = {};
    };
    auto close_battery = [&] {
        close_cycle();
        if (battery.id.empty()) return;
        seen_ids.push_back(battery.id);
        batteries.push_back(finish_battery(std::move(battery), nominal_capacity));
        battery = {};
    };

    for (std::size_t line_no = 2; read_line(in, line); ++line_no) {
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_row(line);
        if (fields.size() != columns)
            bad_row(line_no, "expected " + std::to_string(columns) + " fields, got " +
                                 std::to_string(fields.size()));
        if (fields[0].empty()) bad_row(line_no, "empty battery_id");

        if (fields[0] != battery.id) {
            close_battery();
            if (std::find(seen_ids.begin(), seen_ids.end(), fields[0]) != seen_ids.end())
                bad_row(line_no, "battery " + fields[0] + " appears in two separate blocks");
            battery.id = fields[0];
        }
        const CycleNumber number = parse_int(fields[1], line_no, "cycle_number");
        if (number != cycle.number) close_cycle();
        cycle.number = number;
        cycle.samples.emplace_back(parse_int(fields[2], line_no, "time_step"),
                                   parse_double(fields[3], line_no, "voltage"));
        if (has_capacity && !fields[4].empty() && !cycle.capacity)
            cycle.capacity = parse_double(fields[4], line_no, "capacity");
    }
    close_battery();

    if (batteries.empty()) fail(Errc::missing_header, path + " holds a header but no rows");
    std::sort(batteries.begin(), batteries.end(),
              [](const BatteryData& a, const BatteryData& b) { return a.battery_id < b.battery_id; });
    return batteries;
}

void emit_csv(const std::string& path, const std::vector<BatteryData>& batteries) {
    const bool any_soh =
        std::any_of(batteries.begin(), batteries.end(),
                    [](const BatteryData& b) { return b.soh.has_value(); });
    auto out = open_for_write(path);
    out << kCycleHeader << (any_soh ? ",capacity\n" : "\n");
    for (const BatteryData& battery : batteries) {
        for (const DischargeCycle& cycle : battery.cycles) {
            std::string capacity;
            if (battery.soh)
                capacity = format_double(battery.soh->at_cycle(cycle.cycle_number) *
                                         battery.soh->nominal_capacity);
            for (const VoltageSample& sample : cycle.samples) {
                out << battery.battery_id << ',' << cycle.cycle_number << ',' << sample.time_step
                    << ',' << format_double(sample.voltage);
                if (any_soh) out << ',' << capacity;
                out << '\n';
            }
        }
    }
    if (!out) fail(Errc::io_error, "failed writing " + path);
}

std::vector<FleetPoint> read_fleet_table(const std::string& path) {
    auto in = open_for_read(path);
    std::string line;
    if (!read_line(in, line)) fail(Errc::missing_header, path + " is empty");
    if (line != kFleetHeader)
        fail(Errc::missing_header,
             "expected header '" + std::string(kFleetHeader) + "', got '" + line + "'");

    std::vector<FleetPoint> points;
    for (std::size_t line_no = 2; read_line(in, line); ++line_no) {
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_row(line);
        if (fields.size() != 3)
            bad_row(line_no, "expected 3 fields, got " + std::to_string(fields.size()));
        FleetPoint point{fields[0], parse_int(fields[1], line_no, "knee_onset"),
                         parse_int(fields[2], line_no, "eol")};
        point.validate();
        points.push_back(std::move(point));
    }
    return points;
}

void write_fleet_table(const std::string& path, const std::vector<FleetPoint>& points) {
    auto out = open_for_write(path);
    out << kFleetHeader << '\n';
    for (const FleetPoint& point : points)
        out << point.battery_id << ',' << point.knee_onset << ',' << point.eol << '\n';
    if (!out) fail(Errc::io_error, "failed writing " + path);
}

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t hash = 14695981039346656037ULL;
    for (unsigned char byte : bytes) {
        hash ^= byte;
        hash *= 1099511628211ULL;
    }
    return hash;
}

std::string hash_file(const std::string& path) {
    auto in = open_for_read(path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(buffer.str())));
    return hex;
}

void save_fleet_model(const std::string& path, const FleetModelFile& file) {
    if (!file.gmm.fitted()) fail(Errc::model_not_fitted, "refusing to persist an unfitted model");
    json components = json::array();
    for (const GmmComponent& c : file.gmm.components)
        components.push_back(
            {{"weight", c.weight}, {"mean", c.mean}, {"covariance", c.covariance}});
    const json j{
        {"kind", "fleet_model"},
        {"format_version", kFormatVersion},
        {"manifest", manifest_to_json(file.manifest)},
        {"line",
         {{"slope", file.line.slope},
          {"intercept", file.line.intercept},
          {"r_squared", file.line.r_squared},
          {"residuals", file.line.residuals}}},
        {"gmm",
         {{"components", std::move(components)},
          {"log_likelihood", file.gmm.log_likelihood},
          {"converged", file.gmm.converged},
          {"iterations", file.gmm.iterations},
          {"log_likelihood_trace", file.gmm.log_likelihood_trace}}},
        {"categories",
         {{"long_range_component", file.categories.long_range_component},
          {"short_range_component", file.categories.short_range_component},
          {"eol_boundary", file.categories.eol_boundary}}},
    };
    dump_artifact(path, j);
}

FleetModelFile load_fleet_model(const std::string& path) {
    const json j = load_artifact(path, "fleet_model");
    FleetModelFile file;
    try {
        file.manifest = manifest_from_json(j.at("manifest"));
        const json& line = j.at("line");
        file.line.slope = line.at("slope").get<double>();
        file.line.intercept = line.at("intercept").get<double>();
        file.line.r_squared = line.at("r_squared").get<double>();
        file.line.residuals = line.at("residuals").get<std::vector<double>>();
        const json& gmm = j.at("gmm");
        for (const json& c : gmm.at("components")) {
            GmmComponent component;
            component.weight = c.at("weight").get<double>();
            component.mean = c.at("mean").get<std::array<double, 2>>();
            component.covariance = c.at("covariance").get<std::array<double, 4>>();
            file.gmm.components.push_back(component);
        }
        file.gmm.log_likelihood = gmm.at("log_likelihood").get<double>();
        file.gmm.converged = gmm.at("converged").get<bool>();
        file.gmm.iterations = gmm.at("iterations").get<std::size_t>();
        file.gmm.log_likelihood_trace = gmm.at("log_likelihood_trace").get<std::vector<double>>();
        const json& categories = j.at("categories");
        file.categories.long_range_component =
            categories.at("long_range_component").get<std::size_t>();
        file.categories.short_range_component =
            categories.at("short_range_component").get<std::size_t>();
        file.categories.eol_boundary = categories.at("eol_boundary").get<double>();
    } catch (const json::exception& e) {
        fail(Errc::bad_artifact, path + ": " + e.what());
    }
    return file;
}

void save_soh_model(const std::string& path, const SohModel& model, const RunManifest& manifest) {
    const json j{
        {"kind", "soh_model"},
        {"format_version", kFormatVersion},
        {"manifest", manifest_to_json(manifest)},
        {"config",
         {{"lstm_layer_sizes", model.config.lstm_layer_sizes},
          {"dense_size", model.config.dense_size},
          {"learning_rate", model.config.learning_rate},
          {"epochs", model.config.epochs},
          {"plateau_epochs", model.config.plateau_epochs},
          {"seed", model.config.seed}}},
        {"input_length", model.input_length},
        {"input_scale", model.input_scale},
        {"weights", model.weights},
        {"category", model.category},
        {"battery_id", model.battery_id},
        {"training_span", model.training_span},
        {"trained_from", model.trained_from},
        {"trained_to", model.trained_to},
        {"epoch_loss", model.epoch_loss},
    };
    dump_artifact(path, j);
}

SohModel load_soh_model(const std::string& path, RunManifest* manifest) {
    const json j = load_artifact(path, "soh_model");
    SohModel model;
    try {
        if (manifest) *manifest = manifest_from_json(j.at("manifest"));
        const json& config = j.at("config");
        model.config.lstm_layer_sizes =
            config.at("lstm_layer_sizes").get<std::vector<std::size_t>>();
        model.config.dense_size = config.at("dense_size").get<std::size_t>();
        model.config.learning_rate = config.at("learning_rate").get<double>();
        model.config.epochs = config.at("epochs").get<std::size_t>();
        model.config.plateau_epochs = config.at("plateau_epochs").get<std::size_t>();
        model.config.seed = config.at("seed").get<std::uint64_t>();
        model.input_length = j.at("input_length").get<std::size_t>();
        model.input_scale = j.at("input_scale").get<double>();
        model.weights = j.at("weights").get<std::vector<double>>();
        model.category = j.at("category").get<std::string>();
        model.battery_id = j.at("battery_id").get<std::string>();
        model.training_span = j.at("training_span").get<std::string>();
        model.trained_from = j.at("trained_from").get<CycleNumber>();
        model.trained_to = j.at("trained_to").get<CycleNumber>();
        model.epoch_loss = j.at("epoch_loss").get<std::vector<double>>();
    } catch (const json::exception& e) {
        fail(Errc::bad_artifact, path + ": " + e.what());
    }
    if (model.weights.size() != parameter_count(model.config))
        fail(Errc::bad_artifact, path + ": weight count does not match the configuration");
    return model;
}

} // namespace kneespot
