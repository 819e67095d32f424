#include "bsauth/node.hpp"

#include <algorithm>
#include <cmath>

#include "bsauth/errors.hpp"

namespace bsauth::node {

double NodeConfig::resolved_task_energy_j() const {
    return task_energy_j.value_or(cycle_energy_budget(*this));
}

double NodeConfig::frame_toggle_energy_j() const {
    if (toggle_energy_j == 0.0) {
        return 0.0;
    }
    const codec::ChipStream chips = codec::frame_chips(frame);
    std::size_t toggles = 0;
    std::uint8_t prev = 0;
    for (std::uint8_t c : chips) {
        toggles += c != prev ? 1 : 0;
        prev = c;
    }
    toggles += prev != 0 ? 1 : 0;
    return toggle_energy_j * static_cast<double>(toggles);
}

double NodeConfig::full_energy_j() const {
    return 0.5 * storage_capacitance_f * v_start_v * v_start_v;
}

void NodeConfig::validate() const {
    if (id.empty()) {
        throw ConfigError("id", "must be a non-empty string");
    }
    if (frame.key.empty()) {
        throw ConfigError("key_hex", "at least one key byte");
    }
    if (!(frame.chip_rate_hz > 0.0)) {
        throw ConfigError("chip_rate_hz", "must be > 0");
    }
    if (!(max_chip_rate_hz > 0.0)) {
        throw ConfigError("max_chip_rate_hz", "must be > 0");
    }
    if (frame.chip_rate_hz > max_chip_rate_hz) {
        throw ConfigError("chip_rate_hz", "exceeds max_chip_rate_hz (" + std::to_string(max_chip_rate_hz) +
                                              " Hz); GPIO toggling above 40 kHz distorts the chip stream");
    }
    if (!(storage_capacitance_f > 0.0)) {
        throw ConfigError("storage_capacitance_f", "must be > 0");
    }
    if (!(v_stop_v > 0.0)) {
        throw ConfigError("v_stop_v", "must be > 0");
    }
    if (!(v_start_v > v_stop_v)) {
        throw ConfigError("v_start_v", "must exceed v_stop_v");
    }
    if (task_energy_j && !(*task_energy_j > 0.0)) {
        throw ConfigError("task_energy_j", "must be > 0");
    }
    if (!(toggle_energy_j >= 0.0)) {
        throw ConfigError("toggle_energy_j", "must be >= 0");
    }
    if (resolved_task_energy_j() + frame_toggle_energy_j() > cycle_energy_budget(*this) * (1.0 + 1e-12)) {
        throw ConfigError("task_energy_j", "task plus toggle energy exceeds the cycle budget 0.5*C*(v_start^2 - v_stop^2)");
    }
    if (distance_m && !(*distance_m > 0.0)) {
        throw ConfigError("distance_m", "must be > 0");
    }
    if (channel < 0) {
        throw ConfigError("channel", "must be >= 0");
    }
    if (!(phase_jitter >= 0.0 && phase_jitter <= 1.0)) {
        throw ConfigError("phase_jitter", "must be in [0, 1]");
    }
    if (!(task_delay_s >= 0.0)) {
        throw ConfigError("task_delay_s", "must be >= 0");
    }
}

NodeState initial_state(const NodeConfig& cfg) {
    NodeState s;
    s.stored_energy_j = cfg.full_energy_j() - cfg.resolved_task_energy_j() - cfg.frame_toggle_energy_j();
    return s;
}

double cycle_energy_budget(const NodeConfig& cfg) {
    return 0.5 * cfg.storage_capacitance_f * (cfg.v_start_v * cfg.v_start_v - cfg.v_stop_v * cfg.v_stop_v);
}

double charge_time(double budget_j, double harvest_dc_power_w) {
    if (!(harvest_dc_power_w > 0.0)) {
        throw NoHarvest();
    }
    return budget_j / harvest_dc_power_w;
}

double cycle_period(const NodeConfig& cfg, double harvest_dc_power_w) {
    const double spent = cfg.resolved_task_energy_j() + cfg.frame_toggle_energy_j();
    return charge_time(spent, harvest_dc_power_w) + cfg.frame.duration_s() + cfg.task_delay_s;
}

std::optional<std::uint8_t> Waveform::level_at(double t) const noexcept {
    if (edges.empty()) {
        return std::nullopt;
    }
    // Sample instants that land on a chip boundary up to rounding belong to
    // the later chip.
    const double k = std::floor((t - start_s) / chip_period_s + 1e-9);
    if (k < 0.0 || k >= static_cast<double>(edges.size())) {
        return std::nullopt;
    }
    return edges[static_cast<std::size_t>(k)].level;
}

Waveform emit_waveform(std::span<const std::uint8_t> chips, double chip_rate_hz, double start_s) {
    if (!(chip_rate_hz > 0.0)) {
        throw DomainError("emit_waveform: chip rate must be positive");
    }
    Waveform w;
    w.start_s = start_s;
    w.chip_period_s = 1.0 / chip_rate_hz;
    w.edges.reserve(chips.size());
    for (std::size_t k = 0; k < chips.size(); ++k) {
        w.edges.push_back({start_s + static_cast<double>(k) * w.chip_period_s, chips[k]});
    }
    return w;
}

Waveform emit_waveform(const NodeConfig& cfg, double start_s) {
    return emit_waveform(codec::frame_chips(cfg.frame), cfg.frame.chip_rate_hz, start_s);
}

CycleOutcome next_cycle(const NodeState& state, const NodeConfig& cfg, double harvest_dc_power_w,
                        double now_s, rng::Engine& rng) {
    if (state.mode != Mode::Charging) {
        throw DomainError("next_cycle: node must be in Charging mode");
    }
    const double full = cfg.full_energy_j();
    const double needed = std::max(0.0, full - state.stored_energy_j);
    const double charging = charge_time(needed, harvest_dc_power_w);

    double jitter = 0.0;
    if (cfg.phase_jitter > 0.0) {
        const double span = cfg.phase_jitter * cycle_period(cfg, harvest_dc_power_w);
        jitter = std::uniform_real_distribution<double>(0.0, span)(rng);
    }

    CycleOutcome out;
    const double wake = now_s + charging + jitter;
    const double frame_end = wake + cfg.frame.duration_s();
    out.events.push_back({EventKind::BackscatterFrame, wake});
    out.events.push_back({EventKind::BleBroadcast, frame_end + cfg.task_delay_s});

    out.energy_at_wake_j = full;
    out.energy_after_backscatter_j = full - cfg.frame_toggle_energy_j();
    out.energy_after_task_j = out.energy_after_backscatter_j - cfg.resolved_task_energy_j();

    out.state.stored_energy_j = out.energy_after_task_j;
    out.state.mode = Mode::Charging;
    out.state.cycle_count = state.cycle_count + 1;
    return out;
}

}  // namespace bsauth::node
