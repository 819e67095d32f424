#include "bsauth/engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <optional>
#include <queue>
#include <set>
#include <thread>

#include "bsauth/errors.hpp"

namespace bsauth::engine {

namespace {

// FNV-1a, so per-node streams are keyed by id rather than list position.
std::uint64_t stable_hash(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

template <class Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
    if (threads <= 1 || count < 2) {
        for (std::size_t i = 0; i < count; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const unsigned n = std::min<unsigned>(threads, static_cast<unsigned>(count));
    pool.reserve(n);
    for (unsigned t = 0; t < n; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                fn(i);
            }
        });
    }
    for (auto& th : pool) {
        th.join();
    }
}

int channel_of(const ScenarioConfig& cfg, const node::NodeConfig& n) {
    return std::holds_alternative<Fdm>(cfg.mode) ? n.channel : 0;
}

// Earliest slot boundary of the node's slot at or after t.
double align_to_slot(const Slotted& mode, int slot, double t) {
    const double frame_len = mode.slot_period_s * mode.slot_count();
    const double offset = slot * mode.slot_period_s;
    const double m = std::ceil((t - offset) / frame_len - 1e-12);
    return std::max(0.0, m) * frame_len + offset;
}

struct Scheduled {
    std::size_t node = 0;
    long cycle = 0;
    double frame_start = 0.0;
    double frame_end = 0.0;
    double broadcast = 0.0;
};

enum class Kind { CycleStart, Frame, Broadcast };

struct Event {
    double time;
    std::uint64_t seq;
    Kind kind;
    std::size_t node;
    long cycle;
};

struct Later {
    bool operator()(const Event& a, const Event& b) const {
        return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
};

}  // namespace

int Slotted::slot_count() const noexcept {
    int n = 0;
    for (const auto& [id, slot] : slots) {
        n = std::max(n, slot + 1);
    }
    return n;
}

bool ScenarioConfig::is_attacker(const std::string& id) const {
    return std::find(attackers.begin(), attackers.end(), id) != attackers.end();
}

void ScenarioConfig::validate() const {
    try {
        rf.validate();
    } catch (const DomainError& e) {
        const std::string what = e.what();
        const auto colon = what.find(':');
        throw ConfigError(what.substr(0, colon), colon == std::string::npos ? what : what.substr(colon + 2));
    }
    if (!(duration_s > 0.0)) {
        throw ConfigError("duration_s", "must be > 0");
    }
    if (!(sample_rate_hz > 0.0)) {
        throw ConfigError("sample_rate_hz", "must be > 0");
    }
    if (nodes.empty()) {
        throw ConfigError("nodes", "at least one node");
    }
    std::set<std::string> ids;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const auto& n = nodes[i];
        const std::string path = "nodes[" + std::to_string(i) + "]";
        try {
            n.validate();
        } catch (const ConfigError& e) {
            throw ConfigError(path + "." + e.path(), e.constraint());
        }
        if (!ids.insert(n.id).second) {
            throw ConfigError(path + ".id", "duplicate node id '" + n.id + "'");
        }
        if (sample_rate_hz < 4.0 * n.frame.chip_rate_hz) {
            throw ConfigError(path + ".chip_rate_hz", "sample_rate_hz must be at least 4x the chip rate");
        }
    }
    for (std::size_t i = 0; i < attackers.size(); ++i) {
        if (!ids.contains(attackers[i])) {
            throw ConfigError("attackers[" + std::to_string(i) + "]", "unknown node id '" + attackers[i] + "'");
        }
    }
    if (const auto* slotted = std::get_if<Slotted>(&mode)) {
        if (!(slotted->slot_period_s > 0.0)) {
            throw ConfigError("mode.slot_period_s", "must be > 0");
        }
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            if (is_attacker(nodes[i].id)) {
                continue;
            }
            const auto it = slotted->slots.find(nodes[i].id);
            if (it == slotted->slots.end()) {
                throw ConfigError("mode.slots." + nodes[i].id, "every backscattering node needs a slot");
            }
            if (it->second < 0) {
                throw ConfigError("mode.slots." + nodes[i].id, "slot index must be >= 0");
            }
        }
    }
    if (const auto* fdm = std::get_if<Fdm>(&mode)) {
        if (fdm->channels < 1) {
            throw ConfigError("mode.channels", "must be >= 1");
        }
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            if (nodes[i].channel >= fdm->channels) {
                throw ConfigError("nodes[" + std::to_string(i) + "].channel",
                                  "must be < mode.channels (" + std::to_string(fdm->channels) + ")");
            }
        }
    }
    if (!(auth_window_s > 0.0)) {
        throw ConfigError("monitor.auth_window_s", "must be > 0");
    }
    if (!(guard_fraction >= 0.0)) {
        throw ConfigError("monitor.guard_fraction", "must be >= 0");
    }
    if (!(monitor.detection_floor_db > 0.0)) {
        throw ConfigError("monitor.detection_floor_db", "must be > 0");
    }
    if (!(monitor.integration_fraction > 0.0 && monitor.integration_fraction <= 1.0)) {
        throw ConfigError("monitor.integration_fraction", "must be in (0, 1]");
    }
}

rf::RfParams link_for(const rf::RfParams& rf, const node::NodeConfig& node) {
    rf::RfParams p = rf;
    if (node.distance_m) {
        p.distance_m = *node.distance_m;
    }
    return p;
}

double Reflector::power_mw_at(double t) const {
    for (const auto& f : frames) {
        if (const auto level = f.level_at(t)) {
            return rf::to_milliwatts(*level ? high_dbm : low_dbm);
        }
    }
    return rf::to_milliwatts(low_dbm);
}

Reflector reflector_for(const rf::RfParams& rf, const node::NodeConfig& node, int channel) {
    const rf::RfParams p = link_for(rf, node);
    Reflector r;
    r.high_dbm = rf::backscatter_power_dbm(p, rf::BrState::High);
    r.low_dbm = rf::backscatter_power_dbm(p, rf::BrState::Low);
    r.channel = channel;
    return r;
}

monitor::PowerTrace superpose_trace(const rf::RfParams& rf, std::span<const Reflector> reflectors, double t0_s,
                                    double t1_s, double sample_rate_hz, int channel, rng::Engine& rng) {
    if (!(sample_rate_hz > 0.0) || !(t1_s >= t0_s)) {
        throw DomainError("superpose_trace: invalid window or sample rate");
    }
    for (const auto& r : reflectors) {
        if (r.channel != channel) {
            throw DomainError("superpose_trace: reflector on channel " + std::to_string(r.channel) +
                              " passed for channel " + std::to_string(channel));
        }
    }
    monitor::PowerTrace trace;
    trace.sample_rate_hz = sample_rate_hz;
    trace.start_time_s = t0_s;
    trace.channel = channel;
    const auto n = static_cast<std::size_t>(std::llround((t1_s - t0_s) * sample_rate_hz));
    trace.samples_dbm.resize(n);

    const double leak_mw = rf::to_milliwatts(rf.effective_leakage_dbm);
    std::normal_distribution<double> noise(0.0, rf.noise_sigma_db > 0.0 ? rf.noise_sigma_db : 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = trace.time_of(i);
        double mw = leak_mw;
        for (const auto& r : reflectors) {
            mw += r.power_mw_at(t);
        }
        double dbm = rf::to_dbm(mw);
        if (rf.noise_sigma_db > 0.0) {
            const double z = noise(rng);
            if (std::isfinite(dbm)) {
                dbm += z;
            }
        }
        trace.samples_dbm[i] = dbm;
    }
    return trace;
}

long NodeStats::total_rejects() const {
    long total = 0;
    for (const auto& [reason, count] : rejects) {
        total += count;
    }
    return total;
}

std::string trace_file_name(const std::string& node_id, long cycle) {
    return node_id + "_cycle" + std::to_string(cycle) + ".csv";
}

std::vector<ChannelView> fdm_channelize(const ScenarioConfig& cfg) {
    const auto* fdm = std::get_if<Fdm>(&cfg.mode);
    if (fdm == nullptr) {
        throw DomainError("fdm_channelize: scenario is not in FDM mode");
    }
    std::vector<ChannelView> views(static_cast<std::size_t>(std::max(fdm->channels, 0)));
    for (std::size_t c = 0; c < views.size(); ++c) {
        views[c].channel = static_cast<int>(c);
    }
    for (std::size_t i = 0; i < cfg.nodes.size(); ++i) {
        const int ch = cfg.nodes[i].channel;
        if (ch < 0 || ch >= fdm->channels) {
            throw ChannelOutOfRange(cfg.nodes[i].id, ch, fdm->channels);
        }
        views[static_cast<std::size_t>(ch)].node_indices.push_back(i);
    }
    return views;
}

SimReport run_scenario(const ScenarioConfig& cfg, const RunOptions& options) {
    cfg.validate();
    if (std::holds_alternative<Fdm>(cfg.mode)) {
        fdm_channelize(cfg);
    }
    const std::size_t n_nodes = cfg.nodes.size();

    SimReport report;
    report.nodes.resize(n_nodes);
    std::vector<double> dc_power(n_nodes, 0.0);
    std::vector<node::NodeState> states(n_nodes);
    std::vector<rng::Engine> jitter_rng;
    jitter_rng.reserve(n_nodes);
    for (std::size_t i = 0; i < n_nodes; ++i) {
        const auto& n = cfg.nodes[i];
        report.nodes[i].id = n.id;
        report.nodes[i].attacker = cfg.is_attacker(n.id);
        dc_power[i] = rf::harvest_dc_power_w(link_for(cfg.rf, n));
        states[i] = node::initial_state(n);
        jitter_rng.push_back(rng::make_engine(cfg.seed, rng::Stream::NodeJitter, stable_hash(n.id)));
    }

    // Event loop: charge -> backscatter frame -> sense/broadcast, per node.
    std::priority_queue<Event, std::vector<Event>, Later> queue;
    std::uint64_t seq = 0;
    for (std::size_t i = 0; i < n_nodes; ++i) {
        queue.push({0.0, seq++, Kind::CycleStart, i, 0});
    }
    std::vector<Scheduled> schedule;
    std::vector<std::vector<std::size_t>> pending(n_nodes);
    struct Broadcast {
        std::size_t node;
        long cycle;
        double time;
        std::optional<std::size_t> frame;
    };
    std::vector<Broadcast> broadcasts;
    std::vector<std::optional<std::size_t>> open_frame(n_nodes);

    while (!queue.empty()) {
        const Event ev = queue.top();
        queue.pop();
        if (ev.time > cfg.duration_s) {
            continue;
        }
        const auto& n = cfg.nodes[ev.node];
        switch (ev.kind) {
            case Kind::CycleStart: {
                node::CycleOutcome out;
                try {
                    out = node::next_cycle(states[ev.node], n, dc_power[ev.node], ev.time, jitter_rng[ev.node]);
                } catch (const NoHarvest&) {
                    report.nodes[ev.node].starved = true;
                    break;
                }
                double wake = out.events[0].time_s;
                double shift = 0.0;
                if (const auto* slotted = std::get_if<Slotted>(&cfg.mode); slotted && !report.nodes[ev.node].attacker) {
                    shift = align_to_slot(*slotted, slotted->slots.at(n.id), wake) - wake;
                }
                wake += shift;
                const double broadcast = out.events[1].time_s + shift;
                states[ev.node] = out.state;
                const long cycle = out.state.cycle_count;
                if (!report.nodes[ev.node].attacker) {
                    queue.push({wake, seq++, Kind::Frame, ev.node, cycle});
                }
                queue.push({broadcast, seq++, Kind::Broadcast, ev.node, cycle});
                break;
            }
            case Kind::Frame: {
                const double end = ev.time + n.frame.duration_s();
                if (end > cfg.duration_s) {
                    break;
                }
                open_frame[ev.node] = schedule.size();
                schedule.push_back({ev.node, ev.cycle, ev.time, end, 0.0});
                break;
            }
            case Kind::Broadcast: {
                std::optional<std::size_t> frame;
                if (open_frame[ev.node] && schedule[*open_frame[ev.node]].cycle == ev.cycle) {
                    frame = open_frame[ev.node];
                    schedule[*frame].broadcast = ev.time;
                }
                open_frame[ev.node].reset();
                broadcasts.push_back({ev.node, ev.cycle, ev.time, frame});
                report.nodes[ev.node].cycles_completed = ev.cycle;
                queue.push({ev.time, seq++, Kind::CycleStart, ev.node, ev.cycle});
                break;
            }
        }
    }

    // Collisions: overlapping frames on the same channel.
    std::vector<bool> collided(schedule.size(), false);
    for (std::size_t a = 0; a < schedule.size(); ++a) {
        for (std::size_t b = a + 1; b < schedule.size(); ++b) {
            const auto& fa = schedule[a];
            const auto& fb = schedule[b];
            if (fb.frame_start >= fa.frame_end) {
                break;  // schedule is in start order
            }
            if (channel_of(cfg, cfg.nodes[fa.node]) != channel_of(cfg, cfg.nodes[fb.node])) {
                continue;
            }
            if (fa.frame_start < fb.frame_end && fb.frame_start < fa.frame_end) {
                ++report.collision_events;
                collided[a] = collided[b] = true;
            }
        }
    }

    // Capture and decode each frame. Traces include every same-channel frame
    // that reaches into the capture window.
    std::vector<monitor::PowerTrace> traces(options.sink ? schedule.size() : 0);
    std::vector<monitor::DecodeResult> decoded(schedule.size());
    parallel_for(schedule.size(), options.threads, [&](std::size_t f) {
        const Scheduled& target = schedule[f];
        const auto& target_node = cfg.nodes[target.node];
        const int channel = channel_of(cfg, target_node);
        const double guard = cfg.guard_fraction * (target.frame_end - target.frame_start);
        const double t0 = target.frame_start - guard;
        const double t1 = target.frame_end + guard;

        std::vector<Reflector> reflectors;
        for (std::size_t i = 0; i < n_nodes; ++i) {
            if (report.nodes[i].attacker || channel_of(cfg, cfg.nodes[i]) != channel) {
                continue;
            }
            reflectors.push_back(reflector_for(cfg.rf, cfg.nodes[i], channel));
        }
        std::size_t slot = 0;
        for (std::size_t i = 0; i < n_nodes; ++i) {
            if (report.nodes[i].attacker || channel_of(cfg, cfg.nodes[i]) != channel) {
                continue;
            }
            for (const auto& other : schedule) {
                if (other.node == i && other.frame_start < t1 && other.frame_end > t0) {
                    reflectors[slot].frames.push_back(node::emit_waveform(cfg.nodes[i], other.frame_start));
                }
            }
            ++slot;
        }

        auto noise = rng::make_engine(cfg.seed, rng::Stream::TraceNoise, stable_hash(target_node.id),
                                      static_cast<std::uint64_t>(target.cycle));
        monitor::PowerTrace trace = superpose_trace(cfg.rf, reflectors, t0, t1, cfg.sample_rate_hz, channel, noise);
        decoded[f] = monitor::decode_frame(trace, target_node.frame, cfg.monitor);
        if (options.sink) {
            traces[f] = std::move(trace);
        }
    });

    double dr_sum = 0.0;
    long dr_count = 0;
    for (std::size_t f = 0; f < schedule.size(); ++f) {
        const Scheduled& s = schedule[f];
        auto& stats = report.nodes[s.node];
        ++stats.frames_emitted;
        switch (decoded[f].status) {
            case monitor::DecodeStatus::Decoded:
                ++stats.frames_decoded;
                dr_sum += decoded[f].measured_dr_db;
                ++dr_count;
                break;
            case monitor::DecodeStatus::ChipErrors: ++stats.frames_corrupted; break;
            case monitor::DecodeStatus::NoFrame: ++stats.frames_missed; break;
        }
        FrameRecord rec;
        rec.node_id = cfg.nodes[s.node].id;
        rec.cycle = s.cycle;
        rec.channel = channel_of(cfg, cfg.nodes[s.node]);
        rec.start_s = s.frame_start;
        rec.end_s = s.frame_end;
        rec.collided = collided[f];
        rec.decode = decoded[f];
        const std::string name = trace_file_name(rec.node_id, s.cycle);
        report.frames.push_back(std::move(rec));
        if (options.sink) {
            options.sink(name, traces[f]);
            report.trace_files.push_back(name);
        }
    }
    report.mean_measured_dr_db = dr_count ? dr_sum / static_cast<double>(dr_count) : 0.0;

    monitor::KeyRegistry registry;
    registry.auth_window_s = cfg.auth_window_s;
    for (const auto& n : cfg.nodes) {
        registry.add(n.id, n.frame.key);
    }
    const monitor::DecodeResult no_frame;
    for (const auto& b : broadcasts) {
        const auto& id = cfg.nodes[b.node].id;
        const monitor::DecodeResult& result = b.frame ? decoded[*b.frame] : no_frame;
        const monitor::AuthResult auth = monitor::authenticate(id, result, b.time, registry);
        auto& stats = report.nodes[b.node];
        ++stats.broadcasts;
        if (auth.accepted()) {
            ++stats.accepts;
        } else {
            ++stats.rejects[*auth.reject];
        }
        report.broadcasts.push_back({id, b.cycle, b.time, auth});
    }
    return report;
}

double collision_prob_analytic(int nodes, double frame_s, double cycle_period_s) {
    if (nodes < 2 || !(frame_s >= 0.0) || !(cycle_period_s > 0.0)) {
        throw DomainError("collision_prob_analytic: need nodes >= 2, frame >= 0, period > 0");
    }
    const double ratio = 2.0 * frame_s / cycle_period_s;
    if (nodes == 2) {
        return std::min(1.0, ratio);
    }
    // Sequential-placement approximation; exact only for two nodes.
    double clear = 1.0;
    for (int k = 1; k < nodes; ++k) {
        clear *= std::max(0.0, 1.0 - k * ratio);
    }
    return 1.0 - clear;
}

McEstimate collision_prob_mc(int nodes, double frame_s, double cycle_period_s, std::uint64_t trials,
                             std::uint64_t seed, unsigned threads) {
    if (nodes < 1 || !(frame_s >= 0.0) || !(cycle_period_s > 0.0) || trials < 1) {
        throw DomainError("collision_prob_mc: need nodes >= 1, frame >= 0, period > 0, trials >= 1");
    }
    // Fixed-size chunks, each with its own derived stream, so the hit count is
    // independent of thread count and scheduling.
    constexpr std::uint64_t kChunk = 1u << 14;
    const std::uint64_t chunks = (trials + kChunk - 1) / kChunk;
    std::vector<std::uint64_t> hits(chunks, 0);
    parallel_for(chunks, threads, [&](std::size_t c) {
        auto gen = rng::make_engine(seed, rng::Stream::CollisionTrials, c);
        std::uniform_real_distribution<double> phase(0.0, cycle_period_s);
        std::vector<double> p(static_cast<std::size_t>(nodes));
        const std::uint64_t begin = c * kChunk;
        const std::uint64_t end = std::min(trials, begin + kChunk);
        std::uint64_t local = 0;
        for (std::uint64_t t = begin; t < end; ++t) {
            for (double& x : p) {
                x = phase(gen);
            }
            std::sort(p.begin(), p.end());
            bool hit = false;
            for (std::size_t i = 0; i + 1 < p.size() && !hit; ++i) {
                hit = p[i + 1] - p[i] < frame_s;
            }
            if (!hit && p.size() > 1) {
                hit = p.front() + cycle_period_s - p.back() < frame_s;
            }
            local += hit ? 1 : 0;
        }
        hits[c] = local;
    });
    std::uint64_t total = 0;
    for (auto h : hits) {
        total += h;
    }
    McEstimate out;
    out.estimate = static_cast<double>(total) / static_cast<double>(trials);
    out.std_error = std::sqrt(out.estimate * (1.0 - out.estimate) / static_cast<double>(trials));
    return out;
}

}  // namespace bsauth::engine
