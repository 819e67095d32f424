#include "bsauth/io.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "bsauth/errors.hpp"

namespace bsauth::io {

namespace {

// Walks a JSON object, tracking the field path for error messages and
// rejecting keys nobody asked for.
class ObjectReader {
public:
    ObjectReader(const Json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) {
            throw ConfigError(display(path_), "must be an object");
        }
    }

    std::string child(std::string_view key) const {
        return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
    }

    const Json* find(std::string_view key) {
        seen_.insert(std::string(key));
        const auto it = obj_.find(std::string(key));
        return it == obj_.end() ? nullptr : &*it;
    }

    void number(std::string_view key, double& out) {
        if (const Json* v = find(key)) {
            if (!v->is_number()) {
                throw ConfigError(child(key), "must be a number");
            }
            out = v->get<double>();
        }
    }

    void number(std::string_view key, std::optional<double>& out) {
        if (const Json* v = find(key)) {
            if (!v->is_number()) {
                throw ConfigError(child(key), "must be a number");
            }
            out = v->get<double>();
        }
    }

    void integer(std::string_view key, int& out) {
        if (const Json* v = find(key)) {
            if (!v->is_number_integer()) {
                throw ConfigError(child(key), "must be an integer");
            }
            out = v->get<int>();
        }
    }

    void string(std::string_view key, std::string& out) {
        if (const Json* v = find(key)) {
            if (!v->is_string()) {
                throw ConfigError(child(key), "must be a string");
            }
            out = v->get<std::string>();
        }
    }

    const Json& required(std::string_view key) {
        const Json* v = find(key);
        if (v == nullptr) {
            throw ConfigError(child(key), "is required");
        }
        return *v;
    }

    void finish() const {
        for (const auto& [key, value] : obj_.items()) {
            if (!seen_.contains(key)) {
                throw ConfigError(child(key), "unknown field");
            }
        }
    }

private:
    static std::string display(const std::string& p) { return p.empty() ? "(root)" : p; }

    const Json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

codec::Bytes hex_field(const Json& v, const std::string& path) {
    if (!v.is_string()) {
        throw ConfigError(path, "must be a hex string");
    }
    try {
        return codec::parse_hex(v.get<std::string>());
    } catch (const DomainError& e) {
        throw ConfigError(path, e.what());
    }
}

rf::RfParams parse_rf(const Json& doc) {
    rf::RfParams p;
    ObjectReader r(doc, "rf");
    r.number("tx_power_dbm", p.tx_power_dbm);
    r.number("freq_hz", p.freq_hz);
    r.number("distance_m", p.distance_m);
    r.number("gain_cn_dbi", p.gain_cn_dbi);
    r.number("gain_node_dbi", p.gain_node_dbi);
    r.number("circulator_isolation_db", p.circulator_isolation_db);
    r.number("gamma_high", p.gamma_high);
    r.number("gamma_low", p.gamma_low);
    r.number("rectifier_efficiency", p.rectifier_efficiency);
    r.number("noise_sigma_db", p.noise_sigma_db);
    std::optional<double> leakage;
    std::optional<double> target;
    r.number("effective_leakage_dbm", leakage);
    r.number("target_dr_db", target);
    r.finish();
    if (leakage && target) {
        throw ConfigError("rf.target_dr_db", "give either effective_leakage_dbm or target_dr_db, not both");
    }
    try {
        p.validate();
    } catch (const DomainError& e) {
        const std::string what = e.what();
        const auto colon = what.find(':');
        throw ConfigError(what.substr(0, colon), what.substr(colon + 2));
    }
    if (leakage) {
        p.effective_leakage_dbm = *leakage;
    } else {
        try {
            p.effective_leakage_dbm = rf::calibrate_leakage(p, target.value_or(rf::kReferenceDynamicRangeDb));
        } catch (const UnreachableTarget& e) {
            throw ConfigError("rf.target_dr_db", e.what());
        }
    }
    return p;
}

node::NodeConfig parse_node(const Json& doc, const std::string& path) {
    node::NodeConfig n;
    ObjectReader r(doc, path);
    const Json& id = r.required("id");
    if (!id.is_string()) {
        throw ConfigError(r.child("id"), "must be a string");
    }
    n.id = id.get<std::string>();
    n.frame.key = hex_field(r.required("key_hex"), r.child("key_hex"));
    if (const Json* v = r.find("preamble_hex")) {
        n.frame.preamble = hex_field(*v, r.child("preamble_hex"));
    }
    r.number("chip_rate_hz", n.frame.chip_rate_hz);
    std::string convention = "one_rising";
    r.string("manchester", convention);
    if (convention == "one_rising") {
        n.frame.convention = codec::Convention::OneIsRising;
    } else if (convention == "one_falling") {
        n.frame.convention = codec::Convention::OneIsFalling;
    } else {
        throw ConfigError(r.child("manchester"), "must be \"one_rising\" or \"one_falling\"");
    }
    r.number("max_chip_rate_hz", n.max_chip_rate_hz);
    r.number("storage_capacitance_f", n.storage_capacitance_f);
    r.number("v_start_v", n.v_start_v);
    r.number("v_stop_v", n.v_stop_v);
    r.number("task_energy_j", n.task_energy_j);
    r.number("distance_m", n.distance_m);
    r.integer("channel", n.channel);
    r.number("phase_jitter", n.phase_jitter);
    r.number("task_delay_s", n.task_delay_s);
    r.number("toggle_energy_j", n.toggle_energy_j);
    r.finish();
    return n;
}

engine::AccessMode parse_mode(const Json& doc) {
    ObjectReader r(doc, "mode");
    std::string type = "free_running";
    r.string("type", type);
    if (type == "free_running") {
        r.finish();
        return engine::FreeRunning{};
    }
    if (type == "slotted") {
        engine::Slotted s;
        const Json& period = r.required("slot_period_s");
        if (!period.is_number()) {
            throw ConfigError("mode.slot_period_s", "must be a number");
        }
        s.slot_period_s = period.get<double>();
        const Json& slots = r.required("slots");
        if (!slots.is_object()) {
            throw ConfigError("mode.slots", "must map node id to slot index");
        }
        for (const auto& [id, slot] : slots.items()) {
            if (!slot.is_number_integer()) {
                throw ConfigError("mode.slots." + id, "must be an integer");
            }
            s.slots[id] = slot.get<int>();
        }
        r.finish();
        return s;
    }
    if (type == "fdm") {
        engine::Fdm f;
        const Json& channels = r.required("channels");
        if (!channels.is_number_integer()) {
            throw ConfigError("mode.channels", "must be an integer");
        }
        f.channels = channels.get<int>();
        r.finish();
        return f;
    }
    throw ConfigError("mode.type", "must be one of free_running, slotted, fdm");
}

std::pair<std::size_t, std::size_t> line_and_column(std::string_view text, std::size_t byte) {
    std::size_t line = 1;
    std::size_t col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

engine::ScenarioConfig scenario_from_json(const Json& doc) {
    engine::ScenarioConfig cfg;
    ObjectReader r(doc, "");
    cfg.rf = parse_rf(r.find("rf") ? *r.find("rf") : Json::object());

    const Json& nodes = r.required("nodes");
    if (!nodes.is_array()) {
        throw ConfigError("nodes", "must be an array");
    }
    if (nodes.empty()) {
        throw ConfigError("nodes", "at least one node");
    }
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        cfg.nodes.push_back(parse_node(nodes[i], "nodes[" + std::to_string(i) + "]"));
    }

    r.number("duration_s", cfg.duration_s);
    r.number("sample_rate_hz", cfg.sample_rate_hz);
    if (const Json* seed = r.find("seed")) {
        if (!seed->is_number_unsigned()) {
            throw ConfigError("seed", "must be a non-negative integer");
        }
        cfg.seed = seed->get<std::uint64_t>();
    }
    if (const Json* mode = r.find("mode")) {
        cfg.mode = parse_mode(*mode);
    }
    if (const Json* attackers = r.find("attackers")) {
        if (!attackers->is_array()) {
            throw ConfigError("attackers", "must be an array of node ids");
        }
        for (std::size_t i = 0; i < attackers->size(); ++i) {
            if (!(*attackers)[i].is_string()) {
                throw ConfigError("attackers[" + std::to_string(i) + "]", "must be a string");
            }
            cfg.attackers.push_back((*attackers)[i].get<std::string>());
        }
    }
    if (const Json* mon = r.find("monitor")) {
        ObjectReader m(*mon, "monitor");
        m.number("detection_floor_db", cfg.monitor.detection_floor_db);
        m.number("integration_fraction", cfg.monitor.integration_fraction);
        m.number("baseline_fraction", cfg.monitor.baseline_fraction);
        m.number("auth_window_s", cfg.auth_window_s);
        m.number("guard_fraction", cfg.guard_fraction);
        m.finish();
    }
    r.finish();
    cfg.validate();
    return cfg;
}

engine::ScenarioConfig scenario_from_json_text(std::string_view text) {
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const Json::parse_error& e) {
        const auto [line, col] = line_and_column(text, e.byte == 0 ? 0 : e.byte - 1);
        throw ParseError(line, col, e.what());
    }
    return scenario_from_json(doc);
}

engine::ScenarioConfig parse_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot read scenario file " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return scenario_from_json_text(buf.str());
}

Json scenario_to_json(const engine::ScenarioConfig& cfg) {
    Json doc;
    doc["rf"] = {
        {"tx_power_dbm", cfg.rf.tx_power_dbm},
        {"freq_hz", cfg.rf.freq_hz},
        {"distance_m", cfg.rf.distance_m},
        {"gain_cn_dbi", cfg.rf.gain_cn_dbi},
        {"gain_node_dbi", cfg.rf.gain_node_dbi},
        {"circulator_isolation_db", cfg.rf.circulator_isolation_db},
        {"effective_leakage_dbm", cfg.rf.effective_leakage_dbm},
        {"gamma_high", cfg.rf.gamma_high},
        {"gamma_low", cfg.rf.gamma_low},
        {"rectifier_efficiency", cfg.rf.rectifier_efficiency},
        {"noise_sigma_db", cfg.rf.noise_sigma_db},
    };
    Json nodes = Json::array();
    for (const auto& n : cfg.nodes) {
        Json j = {
            {"id", n.id},
            {"key_hex", codec::to_hex(n.frame.key)},
            {"preamble_hex", codec::to_hex(n.frame.preamble)},
            {"chip_rate_hz", n.frame.chip_rate_hz},
            {"manchester", n.frame.convention == codec::Convention::OneIsRising ? "one_rising" : "one_falling"},
            {"max_chip_rate_hz", n.max_chip_rate_hz},
            {"storage_capacitance_f", n.storage_capacitance_f},
            {"v_start_v", n.v_start_v},
            {"v_stop_v", n.v_stop_v},
            {"channel", n.channel},
            {"phase_jitter", n.phase_jitter},
            {"task_delay_s", n.task_delay_s},
            {"toggle_energy_j", n.toggle_energy_j},
        };
        if (n.task_energy_j) j["task_energy_j"] = *n.task_energy_j;
        if (n.distance_m) j["distance_m"] = *n.distance_m;
        nodes.push_back(std::move(j));
    }
    doc["nodes"] = std::move(nodes);
    doc["duration_s"] = cfg.duration_s;
    doc["seed"] = cfg.seed;
    doc["sample_rate_hz"] = cfg.sample_rate_hz;
    if (const auto* s = std::get_if<engine::Slotted>(&cfg.mode)) {
        Json slots = Json::object();
        for (const auto& [id, slot] : s->slots) slots[id] = slot;
        doc["mode"] = {{"type", "slotted"}, {"slot_period_s", s->slot_period_s}, {"slots", slots}};
    } else if (const auto* f = std::get_if<engine::Fdm>(&cfg.mode)) {
        doc["mode"] = {{"type", "fdm"}, {"channels", f->channels}};
    } else {
        doc["mode"] = {{"type", "free_running"}};
    }
    doc["attackers"] = cfg.attackers;
    doc["monitor"] = {
        {"detection_floor_db", cfg.monitor.detection_floor_db},
        {"integration_fraction", cfg.monitor.integration_fraction},
        {"baseline_fraction", cfg.monitor.baseline_fraction},
        {"auth_window_s", cfg.auth_window_s},
        {"guard_fraction", cfg.guard_fraction},
    };
    return doc;
}

Json to_json(const monitor::DecodeResult& result) {
    Json j;
    j["status"] = monitor::to_string(result.status);
    j["key_hex"] = result.status == monitor::DecodeStatus::Decoded ? Json(codec::to_hex(result.key)) : Json(nullptr);
    j["frame_start_s"] = result.frame_start_s;
    j["frame_end_s"] = result.frame_end_s;
    j["measured_dr_db"] = result.measured_dr_db;
    j["chip_errors"] = result.chip_errors;
    j["first_error_index"] = result.first_error_index;
    return j;
}

Json to_json(const engine::SimReport& report) {
    Json doc;
    Json nodes = Json::array();
    for (const auto& n : report.nodes) {
        Json rejects = Json::object();
        for (const auto& [reason, count] : n.rejects) {
            rejects[monitor::to_string(reason)] = count;
        }
        nodes.push_back({
            {"id", n.id},
            {"attacker", n.attacker},
            {"starved", n.starved},
            {"cycles_completed", n.cycles_completed},
            {"frames_emitted", n.frames_emitted},
            {"frames_decoded", n.frames_decoded},
            {"frames_corrupted", n.frames_corrupted},
            {"frames_missed", n.frames_missed},
            {"broadcasts", n.broadcasts},
            {"accepts", n.accepts},
            {"rejects", rejects},
        });
    }
    doc["nodes"] = std::move(nodes);
    doc["collision_events"] = report.collision_events;
    doc["mean_measured_dr_db"] = report.mean_measured_dr_db;
    doc["trace_files"] = report.trace_files;
    Json frames = Json::array();
    for (const auto& f : report.frames) {
        frames.push_back({
            {"node_id", f.node_id},
            {"cycle", f.cycle},
            {"channel", f.channel},
            {"start_s", f.start_s},
            {"end_s", f.end_s},
            {"collided", f.collided},
            {"decode", to_json(f.decode)},
        });
    }
    doc["frames"] = std::move(frames);
    Json broadcasts = Json::array();
    for (const auto& b : report.broadcasts) {
        broadcasts.push_back({
            {"node_id", b.node_id},
            {"cycle", b.cycle},
            {"time_s", b.time_s},
            {"accepted", b.auth.accepted()},
            {"reason", b.auth.reject ? Json(monitor::to_string(*b.auth.reject)) : Json(nullptr)},
        });
    }
    doc["broadcasts"] = std::move(broadcasts);
    return doc;
}

void write_trace_csv(std::ostream& out, const monitor::PowerTrace& trace) {
    out << "time_s,power_dbm\n";
    for (std::size_t i = 0; i < trace.samples_dbm.size(); ++i) {
        out << format_double(trace.time_of(i)) << ',' << format_double(trace.samples_dbm[i]) << '\n';
    }
}

void write_trace_csv(const std::filesystem::path& path, const monitor::PowerTrace& trace) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write trace file " + path.string());
    }
    write_trace_csv(out, trace);
    if (!out) {
        throw IoError("failed writing trace file " + path.string());
    }
}

monitor::PowerTrace read_trace_csv(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    auto trim = [](std::string s) {
        while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
        std::size_t b = 0;
        while (b < s.size() && s[b] == ' ') ++b;
        return s.substr(b);
    };

    if (!std::getline(in, line)) {
        throw ParseError(1, 1, "empty trace file; header row required");
    }
    ++line_no;
    if (trim(line) != "time_s,power_dbm") {
        throw ParseError(1, 1, "header must be 'time_s,power_dbm'");
    }

    std::vector<double> times;
    monitor::PowerTrace trace;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw ParseError(line_no, 1, "expected two comma-separated columns");
        }
        auto parse = [&](const std::string& field, std::size_t col) {
            const std::string f = trim(field);
            char* end = nullptr;
            errno = 0;
            const double v = std::strtod(f.c_str(), &end);
            if (f.empty() || end != f.c_str() + f.size()) {
                throw ParseError(line_no, col, "not a number: '" + f + "'");
            }
            return v;
        };
        times.push_back(parse(line.substr(0, comma), 1));
        trace.samples_dbm.push_back(parse(line.substr(comma + 1), comma + 2));
    }
    if (times.size() < 2) {
        throw ParseError(line_no, 1, "trace needs at least two samples");
    }
    const double span = times.back() - times.front();
    if (!(span > 0.0)) {
        throw ParseError(line_no, 1, "time column must be increasing");
    }
    double rate = static_cast<double>(times.size() - 1) / span;
    const double snapped = std::round(rate);
    if (snapped > 0.0 && std::abs(rate - snapped) <= 1e-6 * rate) {
        rate = snapped;
    }
    const double dt = 1.0 / rate;
    for (std::size_t i = 1; i < times.size(); ++i) {
        const double step = times[i] - times[i - 1];
        if (std::abs(step - dt) > 0.01 * dt) {
            throw ParseError(i + 2, 1, "non-uniform sample spacing");
        }
    }
    trace.sample_rate_hz = rate;
    trace.start_time_s = times.front();
    return trace;
}

monitor::PowerTrace read_trace_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot read trace file " + path.string());
    }
    return read_trace_csv(in);
}

}  // namespace bsauth::io
