#pragma once

// Closed-form link budget for a monostatic WPT reader with a two-state
// backscattering rectifier (BR) on the node side.
//
// All powers are in dBm, gains and losses in dB/dBi. Negative infinity is a
// valid power and stands for "no power" (linear 0 mW), so that superposition
// of contributions stays total.

#include <limits>

namespace bsauth::rf {

inline constexpr double kSpeedOfLight = 299'792'458.0;
inline constexpr double kNoPowerDbm = -std::numeric_limits<double>::infinity();

enum class BrState { Low, High };

struct RfParams {
    double tx_power_dbm = 18.0;
    double freq_hz = 868e6;
    double distance_m = 1.3;
    double gain_cn_dbi = 9.2;
    double gain_node_dbi = 1.1;
    double circulator_isolation_db = 20.0;
    // Lumped carrier power at the monitor port: circulator leakage, antenna
    // mismatch and static clutter. Normally set by calibrate_leakage().
    double effective_leakage_dbm = -2.0;
    double gamma_high = 0.8;
    double gamma_low = 0.1;
    double rectifier_efficiency = 0.15;
    double noise_sigma_db = 0.02;

    // Throws DomainError naming the offending field.
    void validate() const;
};

// Measured high/low difference that the default scenario is calibrated to.
inline constexpr double kReferenceDynamicRangeDb = 0.15;

// Default parameters with effective_leakage calibrated to the reference
// dynamic range.
RfParams reference_defaults();

double to_milliwatts(double dbm) noexcept;
double to_dbm(double milliwatts) noexcept;

double fspl_db(double freq_hz, double distance_m);

// RF power at the node antenna port, before rectification.
double harvest_power_dbm(const RfParams& p);

// Harvested power after rectification, in watts.
double harvest_dc_power_w(const RfParams& p);

// Node backscatter contribution at the monitor port for one BR state.
// Returns kNoPowerDbm when the state's reflection coefficient is zero.
double backscatter_power_dbm(const RfParams& p, BrState state);

// Carrier leakage worst case with no clutter cancellation: tx power minus
// circulator isolation.
double raw_leakage_dbm(const RfParams& p) noexcept;

double dynamic_range_db(const RfParams& p);

// Upper bound of dynamic_range_db, reached as leakage vanishes.
double leakage_free_ceiling_db(const RfParams& p);

// Solves dynamic_range_db(p with effective_leakage = result) == target_dr_db.
// Throws UnreachableTarget when target_dr_db is not in (0, ceiling).
double calibrate_leakage(const RfParams& p, double target_dr_db);

}  // namespace bsauth::rf
