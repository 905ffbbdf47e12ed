#include "rtkgssm/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <set>

#include "rtkgssm/errors.hpp"
#include "rtkgssm/geodesy.hpp"

namespace rtkgssm {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

struct SkyTrack {
    std::string id;
    double az0 = 0.0, el0 = 0.0;      // rad
    double az_rate = 0.0, el_rate = 0.0;  // rad/s
    double el_lo = 0.0, el_hi = 0.0;
    double range = 2.1e7;

    // Elevation bounces between el_lo and el_hi.
    Eigen::Vector3d direction_enu(double dt) const {
        const double az = az0 + az_rate * dt;
        const double span = el_hi - el_lo;
        double u = std::fmod(el0 - el_lo + el_rate * dt, 2.0 * span);
        if (u < 0.0) u += 2.0 * span;
        const double el = el_lo + (u <= span ? u : 2.0 * span - u);
        return {std::sin(az) * std::cos(el), std::cos(az) * std::cos(el), std::sin(el)};
    }
};

std::string sat_name(int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "G%02d", i + 1);
    return buf;
}

}  // namespace

long long Simulation::dd_integer(int epoch, Band band, const std::string& ref, const std::string& other) const {
    const auto& m = sd_integers.at(static_cast<std::size_t>(epoch));
    return m.at({band, ref}) - m.at({band, other});
}

Simulation generate(const Scenario& sc) {
    if (sc.epochs < 1) throw ValidationError("scenario needs at least one epoch");
    if (sc.satellites < 4) throw ValidationError("scenario needs at least four satellites");
    if (!(sc.interval_s > 0.0)) throw ValidationError("scenario interval must be positive");
    sc.noise.validate();

    std::mt19937_64 rng(sc.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_int_distribution<long long> amb(-sc.max_ambiguity, sc.max_ambiguity);
    std::uniform_int_distribution<long long> jump(1, 9);

    const Eigen::Vector3d base = ecef_from_geodetic(sc.base_lat_deg * kDeg, sc.base_lon_deg * kDeg, sc.base_height_m);
    const EnuFrame frame(base);

    // Sky: the first satellite stays highest so the reference is stable.
    std::vector<SkyTrack> sky(sc.satellites);
    for (int i = 0; i < sc.satellites; ++i) {
        SkyTrack& s = sky[i];
        s.id = sat_name(i);
        s.az0 = 2.0 * std::numbers::pi * (i + 0.3 * unit(rng)) / sc.satellites;
        if (i == 0) {
            s.el_lo = 76.0 * kDeg;
            s.el_hi = 84.0 * kDeg;
            s.el0 = 80.0 * kDeg;
        } else {
            s.el_lo = 12.0 * kDeg;
            s.el_hi = 70.0 * kDeg;
            s.el0 = (15.0 + 50.0 * unit(rng)) * kDeg;
        }
        const double el_rate = (2.0 * unit(rng) - 1.0) * 0.003 * kDeg;
        const double az_rate = (2.0 * unit(rng) - 1.0) * 0.004 * kDeg;
        s.el_rate = sc.static_sky ? 0.0 : (i == 0 ? 0.3 * el_rate : el_rate);
        s.az_rate = sc.static_sky ? 0.0 : az_rate;
        s.range = 2.05e7 + 1.0e6 * unit(rng);
    }

    // Truth: piecewise-constant velocity in the base ENU frame.
    std::vector<Eigen::Vector3d> truth_enu(sc.epochs);
    {
        Eigen::Vector3d p = sc.start_offset_enu;
        Eigen::Vector3d v = Eigen::Vector3d::Zero();
        double seg_end = -1.0;
        for (int k = 0; k < sc.epochs; ++k) {
            const double t = k * sc.interval_s;
            if (k > 0) p += v * sc.interval_s;
            if (t >= seg_end) {
                const double heading = 2.0 * std::numbers::pi * unit(rng);
                const double speed = sc.max_speed_mps * unit(rng);
                v = {speed * std::sin(heading), speed * std::cos(heading), sc.vertical_speed_std_mps * gauss(rng)};
                seg_end = t + sc.segment_s;
            }
            truth_enu[k] = p;
        }
    }

    // Slip schedule: (epoch) -> set of (sat index, band), band -1 meaning all.
    std::vector<std::set<std::pair<int, int>>> slips(sc.epochs);
    auto schedule = [&](int k, int sat, int band) {
        if (k >= 0 && k < sc.epochs) slips[k].emplace(sat, band);
    };
    for (const auto& ev : sc.slips) {
        const int band = ev.band ? static_cast<int>(band_index(*ev.band)) : -1;
        for (int i = 0; i < sc.satellites; ++i) {
            if (ev.sat.empty() || ev.sat == sky[i].id) schedule(ev.epoch, i, band);
        }
    }
    std::vector<double> code_factor(sc.epochs, 1.0);
    for (const auto& w : sc.canyons) {
        for (int k = std::max(0, w.start); k <= std::min(sc.epochs - 1, w.end); ++k) code_factor[k] = sc.canyon_code_factor;
        for (int i = 0; i < sc.satellites; ++i) {
            if (sc.canyon_entry_slips) schedule(w.start, i, -1);
            if (sc.canyon_exit_slips) schedule(w.end + 1, i, -1);
        }
    }
    auto slipped = [&](int k, int sat, Band b) {
        return slips[k].count({sat, -1}) > 0 || slips[k].count({sat, static_cast<int>(band_index(b))}) > 0;
    };

    // Integer ambiguities per (sat, band) at each station.
    const int nb = static_cast<int>(kAllBands.size());
    std::vector<long long> n_rover(sc.satellites * nb), n_base(sc.satellites * nb);
    for (auto& n : n_rover) n = amb(rng);
    for (auto& n : n_base) n = amb(rng);

    Simulation sim;
    sim.canyons = sc.canyons;
    auto& cfg = sim.session.config;
    cfg.base_pos_ecef = base;
    cfg.sampling_interval_s = sc.interval_s;
    cfg.noise = sc.noise;
    cfg.process = sc.process;

    sim.session.epochs.resize(sc.epochs);
    sim.truth.resize(sc.epochs);
    sim.sd_integers.resize(sc.epochs);
    for (int k = 0; k < sc.epochs; ++k) {
        const double dt = k * sc.interval_s;
        const Eigen::Vector3d rover = frame.to_ecef(truth_enu[k]);
        ObservationEpoch& ep = sim.session.epochs[k];
        ep.t = sc.t0 + dt;
        sim.truth[k] = {ep.t, rover};

        int visible = 0;
        for (int i = 0; i < sc.satellites; ++i) {
            const Eigen::Vector3d sat = base + frame.rotation().transpose() * (sky[i].direction_enu(dt) * sky[i].range);
            const double el_r = elevation_angle(rover, sat);
            const double el_b = elevation_angle(base, sat);
            if (el_r <= 0.0 || el_b <= 0.0) continue;
            ++visible;
            const double range_r = (sat - rover).norm();
            const double range_b = (sat - base).norm();

            SatObs ro, bo;
            ro.id = bo.id = sky[i].id;
            ro.pos_ecef = bo.pos_ecef = sat;
            ro.elevation_rad = el_r;
            bo.elevation_rad = el_b;
            for (Band b : sc.bands) {
                const int slot = i * nb + static_cast<int>(band_index(b));
                const bool slip = k > 0 && slipped(k, i, b);
                if (slip) n_rover[slot] += (unit(rng) < 0.5 ? -1 : 1) * jump(rng);
                const double lam = cfg.wavelength(b);
                const double cp_noise = sc.noise_scale * sc.noise.carrier_std(el_r) * gauss(rng);
                const double pr_noise = sc.noise_scale * code_factor[k] * sc.noise.code_std(el_r) * gauss(rng);

                BandObs r;
                r.carrier_cycles = (range_r + cp_noise) / lam + static_cast<double>(n_rover[slot]);
                r.pseudorange_m = range_r + pr_noise;
                r.lock_lost = slip;
                ro.band(b) = r;

                BandObs bb;
                bb.carrier_cycles = range_b / lam + static_cast<double>(n_base[slot]);
                bb.pseudorange_m = range_b;
                bo.band(b) = bb;

                sim.sd_integers[k][{b, sky[i].id}] = n_rover[slot] - n_base[slot];
            }
            ep.rover.push_back(std::move(ro));
            ep.base.push_back(std::move(bo));
        }
        if (visible < 4) {
            throw ValidationError("epoch " + std::to_string(k) + ": only " + std::to_string(visible) +
                                  " satellites visible");
        }
    }

    const Eigen::Vector3d guess_err(gauss(rng), gauss(rng), gauss(rng));
    cfg.rover_initial_guess = sim.truth.front().pos + sc.initial_guess_std_m * guess_err;
    return sim;
}

Scenario urban_canyon_scenario(std::uint64_t seed, int epochs, int canyon_len) {
    Scenario sc;
    sc.seed = seed;
    sc.epochs = epochs;
    sc.satellites = 9;
    const int a = epochs / 4;
    const int b = (2 * epochs) / 3;
    sc.canyons = {{a, std::min(epochs - 1, a + canyon_len - 1)}, {b, std::min(epochs - 1, b + canyon_len - 1)}};
    return sc;
}

}  // namespace rtkgssm
