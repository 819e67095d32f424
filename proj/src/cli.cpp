#include "bsauth/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>

#include <CLI11.hpp>

#include "bsauth/codec.hpp"
#include "bsauth/engine.hpp"
#include "bsauth/errors.hpp"
#include "bsauth/io.hpp"
#include "bsauth/monitor.hpp"
#include "bsauth/rf_link.hpp"

namespace bsauth::cli {

namespace {

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string sci(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4e", v);
    return buf;
}

class Style {
public:
    explicit Style(bool on) : on_(on) {}
    std::string bold(const std::string& s) const { return on_ ? "\x1b[1m" + s + "\x1b[0m" : s; }
    std::string good(const std::string& s) const { return on_ ? "\x1b[32m" + s + "\x1b[0m" : s; }

private:
    bool on_;
};

void row(std::ostream& out, const std::string& label, const std::string& value) {
    std::string padded = "  " + label;
    padded.resize(std::max<std::size_t>(padded.size(), 24), ' ');
    out << padded << value << '\n';
}

struct RfFlags {
    rf::RfParams params;
    std::optional<double> leakage_dbm;
    double target_dr_db = rf::kReferenceDynamicRangeDb;
};

void add_rf_flags(CLI::App* sub, RfFlags& f) {
    sub->add_option("--tx-power", f.params.tx_power_dbm, "RF source output power (dBm)");
    sub->add_option("--freq", f.params.freq_hz, "Carrier frequency (Hz)");
    sub->add_option("--distance", f.params.distance_m, "Reader to node distance (m)");
    sub->add_option("--gain-cn", f.params.gain_cn_dbi, "Reader antenna gain (dBi)");
    sub->add_option("--gain-node", f.params.gain_node_dbi, "Node antenna gain (dBi)");
    sub->add_option("--isolation", f.params.circulator_isolation_db, "Circulator isolation (dB)");
    sub->add_option("--gamma-high", f.params.gamma_high, "BR reflection magnitude, backscatter state");
    sub->add_option("--gamma-low", f.params.gamma_low, "BR reflection magnitude, harvesting state");
    sub->add_option("--efficiency", f.params.rectifier_efficiency, "Rectifier RF to dc efficiency");
}

codec::Convention parse_convention(const std::string& s) {
    if (s == "one_rising") return codec::Convention::OneIsRising;
    if (s == "one_falling") return codec::Convention::OneIsFalling;
    throw ConfigError("--convention", "must be one_rising or one_falling");
}

int cmd_linkbudget(RfFlags& f, bool json, std::ostream& out, const Style& style) {
    rf::RfParams p = f.params;
    p.validate();
    const bool calibrated = !f.leakage_dbm.has_value();
    p.effective_leakage_dbm = calibrated ? rf::calibrate_leakage(p, f.target_dr_db) : *f.leakage_dbm;

    const double harvest = rf::harvest_power_dbm(p);
    const double high = rf::backscatter_power_dbm(p, rf::BrState::High);
    const double low = rf::backscatter_power_dbm(p, rf::BrState::Low);
    const double dr = rf::dynamic_range_db(p);
    if (json) {
        io::Json j = {
            {"fspl_db", rf::fspl_db(p.freq_hz, p.distance_m)},
            {"harvest_power_dbm", harvest},
            {"harvest_dc_power_w", rf::harvest_dc_power_w(p)},
            {"backscatter_high_dbm", high},
            {"backscatter_low_dbm", low},
            {"raw_leakage_dbm", rf::raw_leakage_dbm(p)},
            {"effective_leakage_dbm", p.effective_leakage_dbm},
            {"leakage_calibrated", calibrated},
            {"dynamic_range_db", dr},
            {"ceiling_db", rf::leakage_free_ceiling_db(p)},
        };
        out << j.dump(2) << '\n';
        return kOk;
    }
    out << style.bold("Link budget") << " (" << fixed(p.freq_hz / 1e6, 1) << " MHz, " << fixed(p.distance_m, 2)
        << " m)\n";
    row(out, "path loss", fixed(rf::fspl_db(p.freq_hz, p.distance_m), 2) + " dB");
    row(out, "harvest power", fixed(harvest, 2) + " dBm");
    row(out, "harvest dc power", fixed(rf::harvest_dc_power_w(p) * 1e6, 2) + " uW");
    row(out, "backscatter high", fixed(high, 2) + " dBm");
    row(out, "backscatter low", fixed(low, 2) + " dBm");
    row(out, "effective leakage",
        fixed(p.effective_leakage_dbm, 2) + " dBm" +
            (calibrated ? " (calibrated to " + fixed(f.target_dr_db, 3) + " dB)" : ""));
    row(out, "dynamic range", style.good(fixed(dr, 3) + " dB"));
    return kOk;
}

int cmd_calibrate(RfFlags& f, bool json, std::ostream& out) {
    f.params.validate();
    const double leak = rf::calibrate_leakage(f.params, f.target_dr_db);
    rf::RfParams check = f.params;
    check.effective_leakage_dbm = leak;
    if (json) {
        io::Json j = {{"target_dr_db", f.target_dr_db},
                      {"effective_leakage_dbm", leak},
                      {"dynamic_range_db", rf::dynamic_range_db(check)}};
        out << j.dump(2) << '\n';
    } else {
        out << "effective leakage " << fixed(leak, 2) << " dBm (dynamic range " << fixed(rf::dynamic_range_db(check), 4)
            << " dB)\n";
    }
    return kOk;
}

int cmd_encode(const std::string& key_hex, const std::string& preamble_hex, std::optional<double> chip_rate,
               const std::string& convention, bool json, std::ostream& out) {
    codec::PvkFrame frame;
    frame.key = codec::parse_hex(key_hex);
    frame.preamble = codec::parse_hex(preamble_hex);
    frame.convention = parse_convention(convention);
    if (chip_rate) {
        frame.chip_rate_hz = *chip_rate;
    }
    frame.validate();
    const codec::ChipStream chips = codec::frame_chips(frame);
    if (json) {
        io::Json j = {{"key_hex", codec::to_hex(frame.key)}, {"chips", chips}};
        if (chip_rate) {
            j["chip_rate_hz"] = *chip_rate;
            j["duration_s"] = frame.duration_s();
        }
        out << j.dump() << '\n';
        return kOk;
    }
    if (chip_rate) {
        out << "time_s,chip\n";
        const double period = 1.0 / *chip_rate;
        for (std::size_t k = 0; k < chips.size(); ++k) {
            char buf[48];
            std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(k) * period);
            out << buf << ',' << int(chips[k]) << '\n';
        }
    } else {
        for (auto c : chips) {
            out << int(c) << '\n';
        }
    }
    return kOk;
}

int cmd_decode(const std::string& trace_path, double chip_rate, std::size_t key_len, std::size_t preamble_len,
               std::optional<double> sample_rate, const std::string& convention, double floor_db,
               std::ostream& out) {
    monitor::PowerTrace trace = io::read_trace_csv(std::filesystem::path(trace_path));
    if (sample_rate) {
        trace.sample_rate_hz = *sample_rate;
    }
    codec::PvkFrame spec;
    spec.key.assign(key_len, 0);
    spec.preamble.assign(preamble_len, codec::kDefaultPreambleByte);
    spec.chip_rate_hz = chip_rate;
    spec.convention = parse_convention(convention);
    spec.validate();
    monitor::MonitorConfig cfg;
    cfg.detection_floor_db = floor_db;
    if (trace.sample_rate_hz < 4.0 * chip_rate) {
        throw InsufficientOversampling("trace sample rate is below 4x the chip rate");
    }
    const monitor::DecodeResult result = monitor::decode_frame(trace, spec, cfg);
    out << io::to_json(result).dump(2) << '\n';
    return kOk;
}

int cmd_simulate(const std::string& scenario_path, const std::string& out_dir, std::optional<std::uint64_t> seed,
                 unsigned threads, std::ostream& out) {
    engine::ScenarioConfig cfg = io::parse_scenario(scenario_path);
    if (seed) {
        cfg.seed = *seed;
    }
    engine::RunOptions options;
    options.threads = std::max(1u, threads);
    std::filesystem::path dir;
    if (!out_dir.empty()) {
        dir = out_dir;
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        if (ec) {
            throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
        }
        options.sink = [&dir](const std::string& name, const monitor::PowerTrace& trace) {
            io::write_trace_csv(dir / name, trace);
        };
    }
    const engine::SimReport report = engine::run_scenario(cfg, options);
    const std::string text = io::to_json(report).dump(2) + "\n";
    if (!out_dir.empty()) {
        std::ofstream f(dir / "report.json");
        if (!(f << text)) {
            throw IoError("cannot write " + (dir / "report.json").string());
        }
    }
    out << text;
    return kOk;
}

int cmd_collide(int nodes, double frame_ms, double period_s, std::uint64_t trials, std::uint64_t seed,
                unsigned threads, bool json, std::ostream& out, const Style& style) {
    const double frame_s = frame_ms * 1e-3;
    const double analytic = engine::collision_prob_analytic(nodes, frame_s, period_s);
    const engine::McEstimate mc = engine::collision_prob_mc(nodes, frame_s, period_s, trials, seed, std::max(1u, threads));
    const double z = mc.std_error > 0.0 ? (mc.estimate - analytic) / mc.std_error : 0.0;
    if (json) {
        io::Json j = {{"nodes", nodes},     {"frame_s", frame_s},        {"period_s", period_s},
                      {"trials", trials},   {"seed", seed},              {"analytic", analytic},
                      {"mc_estimate", mc.estimate}, {"mc_stderr", mc.std_error}, {"z_score", z}};
        out << j.dump(2) << '\n';
        return kOk;
    }
    out << style.bold("Collision probability") << " (" << nodes << " nodes, frame " << fixed(frame_ms, 3)
        << " ms, period " << fixed(period_s, 3) << " s)\n";
    row(out, "analytic", sci(analytic) + (nodes > 2 ? " (approximation)" : ""));
    row(out, "monte carlo", sci(mc.estimate) + " +/- " + sci(mc.std_error) + " (" + std::to_string(trials) + " trials)");
    row(out, "deviation", fixed(z, 2) + " stderr");
    return kOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, Console console) {
    CLI::App app{"Backscatter key authentication simulator for battery-free WPT nodes", "bsauth"};
    app.require_subcommand(1);
    const Style style(console.color);

    RfFlags lb;
    bool lb_json = false;
    auto* linkbudget = app.add_subcommand("linkbudget", "Print harvest, backscatter and dynamic-range figures");
    add_rf_flags(linkbudget, lb);
    linkbudget->add_option("--leakage", lb.leakage_dbm, "Effective leakage (dBm); calibrated when omitted");
    linkbudget->add_option("--target-dr", lb.target_dr_db, "Dynamic range used for calibration (dB)");
    linkbudget->add_flag("--json", lb_json, "Machine-readable output");

    RfFlags cal;
    bool cal_json = false;
    auto* calibrate = app.add_subcommand("calibrate", "Solve the effective leakage for a target dynamic range");
    add_rf_flags(calibrate, cal);
    calibrate->add_option("--target-dr", cal.target_dr_db, "Target dynamic range (dB)")->required();
    calibrate->add_flag("--json", cal_json, "Machine-readable output");

    std::string enc_key, enc_preamble, enc_convention = "one_rising";
    std::optional<double> enc_rate;
    bool enc_json = false;
    auto* encode = app.add_subcommand("encode", "Manchester-encode a hex key into chips");
    encode->add_option("--key", enc_key, "Key as hex")->required();
    encode->add_option("--preamble", enc_preamble, "Optional preamble as hex");
    encode->add_option("--chip-rate", enc_rate, "Chip rate (Hz); emits time_s,chip CSV when given");
    encode->add_option("--convention", enc_convention, "one_rising or one_falling");
    encode->add_flag("--json", enc_json, "Machine-readable output");

    std::string dec_trace, dec_convention = "one_rising";
    double dec_rate = 0.0;
    std::size_t dec_key_len = 0, dec_preamble_len = 0;
    std::optional<double> dec_sample_rate;
    double dec_floor = monitor::MonitorConfig{}.detection_floor_db;
    auto* decode = app.add_subcommand("decode", "Decode a key from a power trace CSV");
    decode->add_option("--trace", dec_trace, "Trace CSV (time_s,power_dbm)")->required();
    decode->add_option("--chip-rate", dec_rate, "Chip rate (Hz)")->required();
    decode->add_option("--key-len", dec_key_len, "Key length (bytes)")->required();
    decode->add_option("--preamble-len", dec_preamble_len, "Preamble length (bytes)");
    decode->add_option("--sample-rate", dec_sample_rate, "Override the inferred sample rate (Hz)");
    decode->add_option("--convention", dec_convention, "one_rising or one_falling");
    decode->add_option("--detection-floor", dec_floor, "Detection floor (dB)");

    std::string sim_scenario, sim_out;
    std::optional<std::uint64_t> sim_seed;
    unsigned sim_threads = 1;
    auto* simulate = app.add_subcommand("simulate", "Run a scenario and emit a JSON report");
    simulate->add_option("--scenario", sim_scenario, "Scenario JSON")->required();
    simulate->add_option("--out", sim_out, "Directory for report.json and per-frame traces");
    simulate->add_option("--seed", sim_seed, "Override the scenario seed");
    simulate->add_option("--threads", sim_threads, "Decode worker threads");

    int col_nodes = 2;
    double col_frame_ms = 6.4, col_period = 10.0;
    std::uint64_t col_trials = 1'000'000, col_seed = 0;
    unsigned col_threads = 1;
    bool col_json = false;
    auto* collide = app.add_subcommand("collide", "Analytic and Monte Carlo frame collision probability");
    collide->add_option("--nodes", col_nodes, "Node count");
    collide->add_option("--frame-ms", col_frame_ms, "Frame duration (ms)");
    collide->add_option("--period-s", col_period, "Cycle period (s)");
    collide->add_option("--trials", col_trials, "Monte Carlo trials");
    collide->add_option("--seed", col_seed, "Seed");
    collide->add_option("--threads", col_threads, "Worker threads");
    collide->add_flag("--json", col_json, "Machine-readable output");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            console.out << app.help();
            return kOk;
        }
        console.err << "error: " << e.what() << '\n';
        return kDomainError;
    }

    try {
        if (*linkbudget) return cmd_linkbudget(lb, lb_json, console.out, style);
        if (*calibrate) return cmd_calibrate(cal, cal_json, console.out);
        if (*encode) return cmd_encode(enc_key, enc_preamble, enc_rate, enc_convention, enc_json, console.out);
        if (*decode)
            return cmd_decode(dec_trace, dec_rate, dec_key_len, dec_preamble_len, dec_sample_rate, dec_convention,
                              dec_floor, console.out);
        if (*simulate) return cmd_simulate(sim_scenario, sim_out, sim_seed, sim_threads, console.out);
        if (*collide)
            return cmd_collide(col_nodes, col_frame_ms, col_period, col_trials, col_seed, col_threads, col_json,
                               console.out, style);
    } catch (const IoError& e) {
        console.err << "error: " << e.what() << '\n';
        return kIoError;
    } catch (const std::exception& e) {
        console.err << "error: " << e.what() << '\n';
        return kDomainError;
    }
    return kDomainError;
}

}  // namespace bsauth::cli
