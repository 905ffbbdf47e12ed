#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace rtkgssm {

inline constexpr double kSpeedOfLight = 299792458.0;  ///< m/s, exact

enum class Band : std::uint8_t { L1 = 0, L2 = 1, L5 = 2 };

inline constexpr std::array<Band, 3> kAllBands{Band::L1, Band::L2, Band::L5};

constexpr std::size_t band_index(Band b) { return static_cast<std::size_t>(b); }

/// Nominal carrier frequency in Hz.
constexpr double nominal_frequency(Band b) {
    switch (b) {
        case Band::L1: return 1575.42e6;
        case Band::L2: return 1227.60e6;
        case Band::L5: return 1176.45e6;
    }
    return 0.0;
}

/// Carrier wavelength c/f for the nominal frequency, in meters.
double wavelength(Band b);
double wavelength_for_frequency(double frequency_hz);

std::string_view band_name(Band b);
std::optional<Band> parse_band(std::string_view name);

struct BandObs {
    double carrier_cycles = 0.0;
    double pseudorange_m = 0.0;
    bool lock_lost = false;  ///< loss-of-lock indicator: ambiguity restarts at this epoch
};

struct SatObs {
    std::string id;              ///< constellation letter + PRN, e.g. "G07"
    Eigen::Vector3d pos_ecef = Eigen::Vector3d::Zero();
    double elevation_rad = 0.0;  ///< as seen from the observing station
    std::array<std::optional<BandObs>, 3> bands;

    const std::optional<BandObs>& band(Band b) const { return bands[band_index(b)]; }
    std::optional<BandObs>& band(Band b) { return bands[band_index(b)]; }
    int band_count() const;
};

struct ObservationEpoch {
    double t = 0.0;  ///< GPS seconds of week
    std::vector<SatObs> rover;
    std::vector<SatObs> base;

    const SatObs* find_rover(std::string_view id) const;
    const SatObs* find_base(std::string_view id) const;
};

/// Elevation-dependent single-difference noise, sigma(el) = a + b / sin(el).
struct NoiseModel {
    double code_a_m = 0.3;
    double code_b_m = 0.3;
    double carrier_a_m = 0.003;
    double carrier_b_m = 0.003;

    double code_std(double elevation_rad) const;
    double carrier_std(double elevation_rad) const;
    void validate() const;
};

/// Continuous white-noise spectral densities driving position and velocity.
struct ProcessNoise {
    double vel_psd = 1.0;  ///< (m/s)^2/s per axis
    double pos_psd = 0.0;  ///< m^2/s per axis
};

struct FilterOptions {
    double init_pos_std_m = 30.0;
    double init_vel_std_mps = 10.0;
    double bias_init_std_cycles = 1.0e4;
    /// Per-row innovation gate probability; 0 disables gating.
    double gate_probability = 0.999;
};

struct SessionConfig {
    Eigen::Vector3d base_pos_ecef = Eigen::Vector3d::Zero();
    Eigen::Vector3d rover_initial_guess = Eigen::Vector3d::Zero();
    double sampling_interval_s = 1.0;
    NoiseModel noise;
    ProcessNoise process;
    FilterOptions filter;
    int gssm_max_iters = 5;
    double gssm_tol_m = 1.0e-4;
    std::array<double, 3> band_frequency_hz{nominal_frequency(Band::L1), nominal_frequency(Band::L2),
                                            nominal_frequency(Band::L5)};

    double wavelength(Band b) const { return wavelength_for_frequency(band_frequency_hz[band_index(b)]); }
    void validate() const;
};

/// A parsed observation session. Immutable once constructed.
struct Session {
    SessionConfig config;
    std::vector<ObservationEpoch> epochs;
};

}  // namespace rtkgssm
