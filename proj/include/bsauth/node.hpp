#pragma once

// Battery-free sensing node: constant-power capacitor charging, a Manchester
// backscatter frame at wake-up, then sensing and a BLE broadcast.

#include <optional>
#include <string>
#include <vector>

#include "bsauth/codec.hpp"
#include "bsauth/rng.hpp"

namespace bsauth::node {

struct NodeConfig {
    std::string id;
    codec::PvkFrame frame;
    double storage_capacitance_f = 220e-6;
    double v_start_v = 3.0;
    double v_stop_v = 2.2;
    // Unset means the node drains its whole budget each cycle.
    std::optional<double> task_energy_j;
    // Overrides RfParams::distance_m for this node when set.
    std::optional<double> distance_m;
    int channel = 0;
    double phase_jitter = 0.0;
    double task_delay_s = 0.010;
    double toggle_energy_j = 0.0;
    double max_chip_rate_hz = 40e3;

    double resolved_task_energy_j() const;
    // Energy spent toggling the BR over one frame.
    double frame_toggle_energy_j() const;
    double full_energy_j() const;
    // Throws ConfigError with a path relative to the node.
    void validate() const;
};

enum class Mode { Charging, Backscattering, Tasking };

struct NodeState {
    double stored_energy_j = 0.0;
    Mode mode = Mode::Charging;
    long cycle_count = 0;
};

// Steady-state post-task level; the first cycle is identical to all others.
NodeState initial_state(const NodeConfig& cfg);

double cycle_energy_budget(const NodeConfig& cfg);

// Throws NoHarvest when harvest_dc_power_w <= 0.
double charge_time(double budget_j, double harvest_dc_power_w);

// Nominal period with zero jitter.
double cycle_period(const NodeConfig& cfg, double harvest_dc_power_w);

struct ChipEdge {
    double time_s;
    std::uint8_t level;  // 1 -> high reflection, 0 -> harvesting state
};

// One entry per chip, starting at start_s.
struct Waveform {
    double start_s = 0.0;
    double chip_period_s = 0.0;
    std::vector<ChipEdge> edges;

    double end_s() const noexcept {
        return start_s + chip_period_s * static_cast<double>(edges.size());
    }
    // Level at time t, or nullopt outside the frame.
    std::optional<std::uint8_t> level_at(double t) const noexcept;
};

Waveform emit_waveform(const NodeConfig& cfg, double start_s);
Waveform emit_waveform(std::span<const std::uint8_t> chips, double chip_rate_hz, double start_s);

enum class EventKind { BackscatterFrame, BleBroadcast };

struct NodeEvent {
    EventKind kind;
    double time_s;
};

struct CycleOutcome {
    std::vector<NodeEvent> events;
    NodeState state;
    double energy_at_wake_j = 0.0;
    double energy_after_backscatter_j = 0.0;
    double energy_after_task_j = 0.0;
};

// Charges from state.stored_energy_j to the full level starting at now, then
// backscatters the frame and runs the sense/broadcast task. Requires
// state.mode == Charging.
CycleOutcome next_cycle(const NodeState& state, const NodeConfig& cfg, double harvest_dc_power_w,
                        double now_s, rng::Engine& rng);

}  // namespace bsauth::node
