#include "bsauth/rf_link.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "bsauth/errors.hpp"

namespace bsauth::rf {

namespace {

void require(bool ok, const char* field, const char* constraint) {
    if (!ok) {
        throw DomainError(std::string("rf.") + field + ": " + constraint);
    }
}

double gamma_for(const RfParams& p, BrState state) {
    return state == BrState::High ? p.gamma_high : p.gamma_low;
}

}  // namespace

void RfParams::validate() const {
    require(std::isfinite(tx_power_dbm), "tx_power_dbm", "must be finite");
    require(freq_hz > 0.0 && std::isfinite(freq_hz), "freq_hz", "must be > 0");
    require(distance_m > 0.0 && std::isfinite(distance_m), "distance_m", "must be > 0");
    require(std::isfinite(gain_cn_dbi), "gain_cn_dbi", "must be finite");
    require(std::isfinite(gain_node_dbi), "gain_node_dbi", "must be finite");
    require(!std::isnan(effective_leakage_dbm) && effective_leakage_dbm != HUGE_VAL,
            "effective_leakage_dbm", "must be finite or -inf");
    require(gamma_low >= 0.0, "gamma_low", "must be >= 0");
    require(gamma_high <= 1.0, "gamma_high", "must be <= 1");
    require(gamma_low < gamma_high, "gamma_high", "must exceed gamma_low");
    require(rectifier_efficiency > 0.0 && rectifier_efficiency <= 1.0, "rectifier_efficiency",
            "must be in (0, 1]");
    require(noise_sigma_db >= 0.0 && std::isfinite(noise_sigma_db), "noise_sigma_db",
            "must be >= 0");
}

RfParams reference_defaults() {
    RfParams p;
    p.effective_leakage_dbm = calibrate_leakage(p, kReferenceDynamicRangeDb);
    return p;
}

double to_milliwatts(double dbm) noexcept {
    if (dbm == kNoPowerDbm) {
        return 0.0;
    }
    return std::pow(10.0, dbm / 10.0);
}

double to_dbm(double milliwatts) noexcept {
    if (milliwatts <= 0.0) {
        return kNoPowerDbm;
    }
    return 10.0 * std::log10(milliwatts);
}

double fspl_db(double freq_hz, double distance_m) {
    if (!(freq_hz > 0.0) || !(distance_m > 0.0)) {
        throw DomainError("fspl_db: frequency and distance must be positive");
    }
    return 20.0 * std::log10(4.0 * std::numbers::pi * distance_m * freq_hz / kSpeedOfLight);
}

double harvest_power_dbm(const RfParams& p) {
    return p.tx_power_dbm + p.gain_cn_dbi + p.gain_node_dbi - fspl_db(p.freq_hz, p.distance_m);
}

double harvest_dc_power_w(const RfParams& p) {
    return p.rectifier_efficiency * to_milliwatts(harvest_power_dbm(p)) * 1e-3;
}

double backscatter_power_dbm(const RfParams& p, BrState state) {
    const double gamma = gamma_for(p, state);
    const double path = p.tx_power_dbm + 2.0 * p.gain_cn_dbi + 2.0 * p.gain_node_dbi -
                        2.0 * fspl_db(p.freq_hz, p.distance_m);
    if (gamma <= 0.0) {
        return kNoPowerDbm;
    }
    return path + 20.0 * std::log10(gamma);
}

double raw_leakage_dbm(const RfParams& p) noexcept {
    return p.tx_power_dbm - p.circulator_isolation_db;
}

double dynamic_range_db(const RfParams& p) {
    const double leak = to_milliwatts(p.effective_leakage_dbm);
    const double high = to_milliwatts(backscatter_power_dbm(p, BrState::High));
    const double low = to_milliwatts(backscatter_power_dbm(p, BrState::Low));
    if (leak + low <= 0.0) {
        // Nothing but the high state reaches the monitor; the ratio is unbounded.
        return high > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    }
    return 10.0 * std::log10((leak + high) / (leak + low));
}

double leakage_free_ceiling_db(const RfParams& p) {
    return 20.0 * std::log10(p.gamma_high / p.gamma_low);
}

double calibrate_leakage(const RfParams& p, double target_dr_db) {
    const double ceiling = leakage_free_ceiling_db(p);
    if (!(target_dr_db > 0.0) || !(target_dr_db < ceiling)) {
        throw UnreachableTarget("target dynamic range " + std::to_string(target_dr_db) +
                                " dB is outside (0, " + std::to_string(ceiling) + ") dB");
    }
    // (L + Ph) = r (L + Pl)  =>  L = (Ph - r Pl) / (r - 1)
    const double ratio = std::pow(10.0, target_dr_db / 10.0);
    const double high = to_milliwatts(backscatter_power_dbm(p, BrState::High));
    const double low = to_milliwatts(backscatter_power_dbm(p, BrState::Low));
    const double leak = (high - ratio * low) / (ratio - 1.0);
    return to_dbm(leak);
}

}  // namespace bsauth::rf
