#pragma once

// Deterministic multi-node simulation: node schedules, monitor trace
// synthesis, per-frame decode and authentication, collision statistics.

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "bsauth/monitor.hpp"
#include "bsauth/node.hpp"
#include "bsauth/rf_link.hpp"
#include "bsauth/rng.hpp"

namespace bsauth::engine {

struct FreeRunning {};

// Frames start only at (m * slot_count + slot) * slot_period_s.
struct Slotted {
    double slot_period_s = 0.0;
    std::map<std::string, int> slots;

    int slot_count() const noexcept;
};

struct Fdm {
    int channels = 1;
};

using AccessMode = std::variant<FreeRunning, Slotted, Fdm>;

struct ScenarioConfig {
    rf::RfParams rf = rf::reference_defaults();
    std::vector<node::NodeConfig> nodes;
    double duration_s = 100.0;
    std::uint64_t seed = 0;
    AccessMode mode = FreeRunning{};
    double sample_rate_hz = 1e6;
    std::vector<std::string> attackers;
    monitor::MonitorConfig monitor;
    double auth_window_s = 1.0;
    // Captured trace extends this fraction of the frame before and after it.
    double guard_fraction = 0.25;

    bool is_attacker(const std::string& id) const;
    // Throws ConfigError with the failing field path.
    void validate() const;
};

// Link parameters seen by one node (distance override applied).
rf::RfParams link_for(const rf::RfParams& rf, const node::NodeConfig& node);

// A node's BR as seen by the monitor. Outside its frames it sits in the
// harvesting state and reflects low_dbm.
struct Reflector {
    double high_dbm = rf::kNoPowerDbm;
    double low_dbm = rf::kNoPowerDbm;
    int channel = 0;
    std::vector<node::Waveform> frames;

    // Level at t: high when inside a frame with chip 1, low otherwise.
    double power_mw_at(double t) const;
};

Reflector reflector_for(const rf::RfParams& rf, const node::NodeConfig& node, int channel);

// Samples t0 + i / sample_rate for i < round((t1 - t0) * sample_rate). Noise
// is Gaussian in the dB domain with rf.noise_sigma_db.
monitor::PowerTrace superpose_trace(const rf::RfParams& rf, std::span<const Reflector> reflectors, double t0_s,
                                    double t1_s, double sample_rate_hz, int channel, rng::Engine& rng);

struct FrameRecord {
    std::string node_id;
    long cycle = 0;
    int channel = 0;
    double start_s = 0.0;
    double end_s = 0.0;
    bool collided = false;
    monitor::DecodeResult decode;
};

struct BroadcastRecord {
    std::string node_id;
    long cycle = 0;
    double time_s = 0.0;
    monitor::AuthResult auth;
};

struct NodeStats {
    std::string id;
    bool attacker = false;
    bool starved = false;
    long cycles_completed = 0;
    long frames_emitted = 0;
    long frames_decoded = 0;
    long frames_corrupted = 0;
    long frames_missed = 0;
    long broadcasts = 0;
    long accepts = 0;
    std::map<monitor::RejectReason, long> rejects;

    long total_rejects() const;
};

struct SimReport {
    std::vector<NodeStats> nodes;
    long collision_events = 0;
    double mean_measured_dr_db = 0.0;
    std::vector<std::string> trace_files;
    std::vector<FrameRecord> frames;
    std::vector<BroadcastRecord> broadcasts;
};

using TraceSink = std::function<void(const std::string& file_name, const monitor::PowerTrace& trace)>;

struct RunOptions {
    unsigned threads = 1;
    // Receives every synthesised frame trace, in frame order.
    TraceSink sink;
};

std::string trace_file_name(const std::string& node_id, long cycle);

SimReport run_scenario(const ScenarioConfig& cfg, const RunOptions& options = {});

struct ChannelView {
    int channel = 0;
    std::vector<std::size_t> node_indices;
};

// Requires Fdm mode. Throws ChannelOutOfRange.
std::vector<ChannelView> fdm_channelize(const ScenarioConfig& cfg);

double collision_prob_analytic(int nodes, double frame_s, double cycle_period_s);

struct McEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
};

McEstimate collision_prob_mc(int nodes, double frame_s, double cycle_period_s, std::uint64_t trials,
                             std::uint64_t seed, unsigned threads = 1);

}  // namespace bsauth::engine
