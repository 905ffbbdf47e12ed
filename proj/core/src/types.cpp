#include "rtkgssm/types.hpp"

#include <algorithm>
#include <cmath>

#include "rtkgssm/errors.hpp"

namespace rtkgssm {

double wavelength_for_frequency(double frequency_hz) { return kSpeedOfLight / frequency_hz; }

double wavelength(Band b) { return wavelength_for_frequency(nominal_frequency(b)); }

std::string_view band_name(Band b) {
    switch (b) {
        case Band::L1: return "L1";
        case Band::L2: return "L2";
        case Band::L5: return "L5";
    }
    return "?";
}

std::optional<Band> parse_band(std::string_view name) {
    for (Band b : kAllBands) {
        if (band_name(b) == name) return b;
    }
    return std::nullopt;
}

int SatObs::band_count() const {
    return static_cast<int>(std::count_if(bands.begin(), bands.end(), [](const auto& o) { return o.has_value(); }));
}

namespace {
const SatObs* find_in(const std::vector<SatObs>& sats, std::string_view id) {
    auto it = std::find_if(sats.begin(), sats.end(), [&](const SatObs& s) { return s.id == id; });
    return it == sats.end() ? nullptr : &*it;
}
}  // namespace

const SatObs* ObservationEpoch::find_rover(std::string_view id) const { return find_in(rover, id); }
const SatObs* ObservationEpoch::find_base(std::string_view id) const { return find_in(base, id); }

double NoiseModel::code_std(double elevation_rad) const { return code_a_m + code_b_m / std::sin(elevation_rad); }

double NoiseModel::carrier_std(double elevation_rad) const {
    return carrier_a_m + carrier_b_m / std::sin(elevation_rad);
}

void NoiseModel::validate() const {
    if (!(code_a_m > 0 && code_b_m > 0 && carrier_a_m > 0 && carrier_b_m > 0)) {
        throw ValidationError("noise model coefficients must all be positive");
    }
}

void SessionConfig::validate() const {
    if (!(sampling_interval_s > 0)) throw ValidationError("sampling_interval_s must be positive");
    noise.validate();
    if (process.vel_psd < 0 || process.pos_psd < 0) throw ValidationError("process noise densities must be >= 0");
    if (!(filter.init_pos_std_m > 0 && filter.init_vel_std_mps > 0 && filter.bias_init_std_cycles > 0)) {
        throw ValidationError("filter initial standard deviations must be positive");
    }
    if (filter.gate_probability < 0 || filter.gate_probability >= 1) {
        throw ValidationError("gate_probability must be in [0, 1)");
    }
    if (gssm_max_iters < 1) throw ValidationError("gssm max_iters must be >= 1");
    if (!(gssm_tol_m > 0)) throw ValidationError("gssm tol_m must be positive");
    for (double f : band_frequency_hz) {
        if (!(f > 0)) throw ValidationError("band frequencies must be positive");
    }
}

}  // namespace rtkgssm
