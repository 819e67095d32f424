#pragma once

// P-wave monitor: recovers a node's Manchester-coded key from the received
// power envelope and gates the node's BLE data on it.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bsauth/codec.hpp"

namespace bsauth::monitor {

struct PowerTrace {
    double sample_rate_hz = 1e6;
    std::vector<double> samples_dbm;
    double start_time_s = 0.0;
    int channel = 0;

    double duration_s() const noexcept {
        return static_cast<double>(samples_dbm.size()) / sample_rate_hz;
    }
    double time_of(std::size_t index) const noexcept {
        return start_time_s + static_cast<double>(index) / sample_rate_hz;
    }
};

struct MonitorConfig {
    double detection_floor_db = 0.01;
    // Fraction of each chip, centred, averaged by the slicer.
    double integration_fraction = 0.5;
    // Leading fraction of the trace used for the baseline median.
    double baseline_fraction = 0.1;
};

struct FrameWindow {
    std::size_t start = 0;
    std::size_t end = 0;
};

// Throws NoFrame or TraceTooShort.
FrameWindow detect_frame(const PowerTrace& trace, std::size_t expected_chips, double chip_rate_hz,
                         const MonitorConfig& cfg = {});

struct Levels {
    double high_dbm = 0.0;
    double low_dbm = 0.0;
    double threshold_dbm = 0.0;
    double measured_dr_db() const noexcept { return high_dbm - low_dbm; }
};

// Two-means split with midrange initialisation. Throws DegenerateLevels.
Levels estimate_levels(std::span<const double> window, double detection_floor_db = 0.01);

// Chip count is the number of chips whose integration region lies inside the
// window.
// Throws InsufficientOversampling when sample_rate < 4 * chip_rate.
codec::ChipStream slice_chips(std::span<const double> window, double sample_rate_hz, double chip_rate_hz,
                              double threshold_dbm, double integration_fraction = 0.5);

enum class DecodeStatus { Decoded, NoFrame, ChipErrors };

struct DecodeResult {
    DecodeStatus status = DecodeStatus::NoFrame;
    std::size_t chip_errors = 0;
    std::size_t first_error_index = 0;
    codec::Bytes key;  // only when Decoded
    double frame_start_s = 0.0;
    double frame_end_s = 0.0;
    double measured_dr_db = 0.0;

    bool operator==(const DecodeResult&) const = default;
};

const char* to_string(DecodeStatus status) noexcept;

// frame_spec supplies key length, preamble, chip rate and convention; its key
// bytes are not consulted. Throws TraceTooShort.
DecodeResult decode_frame(const PowerTrace& trace, const codec::PvkFrame& frame_spec,
                          const MonitorConfig& cfg = {});

enum class RejectReason { NoFrame, KeyMismatch, WindowExpired, UnknownNode, CorruptFrame };

const char* to_string(RejectReason reason) noexcept;

struct KeyRegistry {
    std::map<std::string, codec::Bytes> keys;
    double auth_window_s = 1.0;

    // Throws ConfigError on a duplicate id.
    void add(const std::string& node_id, codec::Bytes key);
};

struct AuthResult {
    std::optional<RejectReason> reject;
    bool accepted() const noexcept { return !reject.has_value(); }
};

AuthResult authenticate(const std::string& node_id, const DecodeResult& result, double ble_event_time_s,
                        const KeyRegistry& registry);

}  // namespace bsauth::monitor
