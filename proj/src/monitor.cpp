#include "bsauth/monitor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bsauth/errors.hpp"

namespace bsauth::monitor {

namespace {

// Comparisons against the detection floor tolerate rounding in dB arithmetic.
constexpr double kFloorSlack = 1e-9;

double median(std::vector<double> v) {
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (v.size() % 2 == 1) {
        return *mid;
    }
    const double upper = *mid;
    const double lower = *std::max_element(v.begin(), mid);
    return 0.5 * (lower + upper);
}

std::size_t frame_samples(std::size_t chips, double samples_per_chip) {
    return static_cast<std::size_t>(std::llround(static_cast<double>(chips) * samples_per_chip));
}

}  // namespace

FrameWindow detect_frame(const PowerTrace& trace, std::size_t expected_chips, double chip_rate_hz,
                         const MonitorConfig& cfg) {
    if (!(trace.sample_rate_hz > 0.0) || !(chip_rate_hz > 0.0)) {
        throw DomainError("detect_frame: sample and chip rates must be positive");
    }
    const auto& s = trace.samples_dbm;
    const double spc = trace.sample_rate_hz / chip_rate_hz;
    const std::size_t needed = frame_samples(expected_chips, spc);
    if (s.size() < needed || s.empty()) {
        throw TraceTooShort("trace holds " + std::to_string(s.size()) + " samples, frame needs " +
                            std::to_string(needed));
    }

    const auto lead = std::max<std::size_t>(1, static_cast<std::size_t>(cfg.baseline_fraction * s.size()));
    const double baseline = median(std::vector<double>(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(lead)));

    // Centred moving average over about a quarter chip. The width is odd so a
    // clean step never averages to exactly half its height.
    auto w = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(spc / 4.0)));
    w |= 1;
    std::vector<double> prefix(s.size() + 1, 0.0);
    for (std::size_t i = 0; i < s.size(); ++i) {
        prefix[i + 1] = prefix[i] + s[i];
    }
    const std::size_t back = (w - 1) / 2;
    std::vector<double> dev(s.size());
    double peak = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const std::size_t lo = i >= back ? i - back : 0;
        const std::size_t hi = std::min(s.size(), lo + w);
        const double avg = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
        dev[i] = std::abs(avg - baseline);
        if (std::isfinite(dev[i])) {
            peak = std::max(peak, dev[i]);
        }
    }
    if (peak < cfg.detection_floor_db - kFloorSlack) {
        throw NoFrame();
    }

    const double half = 0.5 * peak;
    std::size_t run = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        run = dev[i] > half ? run + 1 : 0;
        if (run == w) {
            const std::size_t start = i + 1 - w;
            return {start, start + needed};
        }
    }
    throw NoFrame();
}

Levels estimate_levels(std::span<const double> window, double detection_floor_db) {
    if (window.empty()) {
        throw DegenerateLevels("empty level window");
    }
    const auto [min_it, max_it] = std::minmax_element(window.begin(), window.end());
    const double lo = *min_it;
    const double hi = *max_it;
    if (!std::isfinite(lo) || !std::isfinite(hi)) {
        throw DegenerateLevels("level window contains non-finite samples");
    }
    if (hi - lo < detection_floor_db - kFloorSlack) {
        throw DegenerateLevels("sample spread " + std::to_string(hi - lo) + " dB is below the detection floor");
    }

    double low_mean = lo;
    double high_mean = hi;
    for (int iter = 0; iter < 100; ++iter) {
        const double threshold = 0.5 * (low_mean + high_mean);
        double low_sum = 0.0, high_sum = 0.0;
        std::size_t low_n = 0, high_n = 0;
        for (double x : window) {
            if (x > threshold) {
                high_sum += x;
                ++high_n;
            } else {
                low_sum += x;
                ++low_n;
            }
        }
        const double next_low = low_n ? low_sum / static_cast<double>(low_n) : low_mean;
        const double next_high = high_n ? high_sum / static_cast<double>(high_n) : high_mean;
        const double shift = std::max(std::abs(next_low - low_mean), std::abs(next_high - high_mean));
        low_mean = next_low;
        high_mean = next_high;
        if (shift < 1e-9) {
            break;
        }
    }
    return {high_mean, low_mean, 0.5 * (low_mean + high_mean)};
}

codec::ChipStream slice_chips(std::span<const double> window, double sample_rate_hz, double chip_rate_hz,
                              double threshold_dbm, double integration_fraction) {
    if (!(chip_rate_hz > 0.0) || !(sample_rate_hz >= 4.0 * chip_rate_hz)) {
        throw InsufficientOversampling("sample rate " + std::to_string(sample_rate_hz) +
                                       " Hz is below 4x the chip rate " + std::to_string(chip_rate_hz) + " Hz");
    }
    if (!(integration_fraction > 0.0 && integration_fraction <= 1.0)) {
        throw DomainError("integration_fraction must be in (0, 1]");
    }
    const double spc = sample_rate_hz / chip_rate_hz;
    const double margin = 0.5 * (1.0 - integration_fraction) * spc;
    const auto chips =
        static_cast<std::size_t>(std::floor((static_cast<double>(window.size()) + margin) / spc + 1e-9));

    codec::ChipStream out;
    out.reserve(chips);
    for (std::size_t k = 0; k < chips; ++k) {
        const double base = static_cast<double>(k) * spc;
        auto lo = static_cast<std::size_t>(std::ceil(base + margin - 1e-9));
        auto hi = static_cast<std::size_t>(std::ceil(base + spc - margin - 1e-9));
        hi = std::min(std::max(hi, lo + 1), window.size());
        double sum = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
            sum += window[i];
        }
        const double avg = sum / static_cast<double>(hi - lo);
        out.push_back(avg > threshold_dbm ? 1 : 0);
    }
    return out;
}

const char* to_string(DecodeStatus status) noexcept {
    switch (status) {
        case DecodeStatus::Decoded: return "Decoded";
        case DecodeStatus::NoFrame: return "NoFrame";
        case DecodeStatus::ChipErrors: return "ChipErrors";
    }
    return "?";
}

DecodeResult decode_frame(const PowerTrace& trace, const codec::PvkFrame& frame_spec, const MonitorConfig& cfg) {
    const std::size_t chips = frame_spec.total_chips();
    DecodeResult result;

    FrameWindow detected;
    try {
        detected = detect_frame(trace, chips, frame_spec.chip_rate_hz, cfg);
    } catch (const NoFrame&) {
        return result;
    }

    // A frame whose first bit starts with a low chip is first seen one chip
    // late, so both alignments are tried and the one with fewer invalid
    // chip pairs wins. Ties keep the detected start.
    const double spc = trace.sample_rate_hz / frame_spec.chip_rate_hz;
    const std::size_t span = detected.end - detected.start;
    const auto chip_step = static_cast<std::size_t>(std::llround(spc));
    std::vector<std::size_t> candidates{detected.start};
    if (detected.start >= chip_step) {
        candidates.push_back(detected.start - chip_step);
    }

    bool have_best = false;
    std::size_t best_start = 0;
    Levels best_levels;
    codec::LenientDecode best;
    for (std::size_t start : candidates) {
        if (start + span > trace.samples_dbm.size()) {
            continue;
        }
        const std::span<const double> window(trace.samples_dbm.data() + start, span);
        Levels levels;
        try {
            levels = estimate_levels(window, cfg.detection_floor_db);
        } catch (const DegenerateLevels&) {
            continue;
        }
        codec::ChipStream sliced =
            slice_chips(window, trace.sample_rate_hz, frame_spec.chip_rate_hz, levels.threshold_dbm,
                        cfg.integration_fraction);
        sliced.resize(chips, 0);
        codec::LenientDecode decoded = codec::decode_manchester_lenient(sliced, frame_spec.convention);
        if (!have_best || decoded.invalid_pairs < best.invalid_pairs) {
            have_best = true;
            best_start = start;
            best_levels = levels;
            best = std::move(decoded);
        }
    }
    if (!have_best) {
        if (detected.start + span > trace.samples_dbm.size()) {
            throw TraceTooShort("frame detected too close to the end of the trace");
        }
        return result;
    }

    result.frame_start_s = trace.time_of(best_start);
    result.frame_end_s = result.frame_start_s + static_cast<double>(chips) / frame_spec.chip_rate_hz;
    result.measured_dr_db = std::max(0.0, best_levels.measured_dr_db());
    if (best.invalid_pairs > 0) {
        result.status = DecodeStatus::ChipErrors;
        result.chip_errors = best.invalid_pairs;
        result.first_error_index = best.first_invalid;
        return result;
    }
    result.status = DecodeStatus::Decoded;
    const std::size_t preamble_bits = frame_spec.preamble.size() * 8;
    result.key = codec::bits_to_bytes(
        std::span<const std::uint8_t>(best.bits).subspan(preamble_bits));
    return result;
}

const char* to_string(RejectReason reason) noexcept {
    switch (reason) {
        case RejectReason::NoFrame: return "NoFrame";
        case RejectReason::KeyMismatch: return "KeyMismatch";
        case RejectReason::WindowExpired: return "WindowExpired";
        case RejectReason::UnknownNode: return "UnknownNode";
        case RejectReason::CorruptFrame: return "CorruptFrame";
    }
    return "?";
}

void KeyRegistry::add(const std::string& node_id, codec::Bytes key) {
    if (!keys.emplace(node_id, std::move(key)).second) {
        throw ConfigError("registry." + node_id, "duplicate node id");
    }
}

AuthResult authenticate(const std::string& node_id, const DecodeResult& result, double ble_event_time_s,
                        const KeyRegistry& registry) {
    if (!(ble_event_time_s >= 0.0)) {
        throw DomainError("authenticate: BLE event time must be >= 0");
    }
    const auto it = registry.keys.find(node_id);
    if (it == registry.keys.end()) {
        return {RejectReason::UnknownNode};
    }
    switch (result.status) {
        case DecodeStatus::NoFrame: return {RejectReason::NoFrame};
        case DecodeStatus::ChipErrors: return {RejectReason::CorruptFrame};
        case DecodeStatus::Decoded: break;
    }
    if (result.key != it->second) {
        return {RejectReason::KeyMismatch};
    }
    const double gap = ble_event_time_s - result.frame_end_s;
    if (gap < -1e-9 || gap > registry.auth_window_s) {
        return {RejectReason::WindowExpired};
    }
    return {};
}

}  // namespace bsauth::monitor
