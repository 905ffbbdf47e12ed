#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rtkgssm/solution.hpp"
#include "rtkgssm/types.hpp"

namespace rtkgssm {

/// Loss of lock on one satellite (or every satellite when `sat` is empty), on
/// one band or on all bands.
struct SlipEvent {
    int epoch = 0;
    std::string sat;
    std::optional<Band> band;
};

/// Epoch window [start, end] (inclusive) with degraded code; no ambiguity is
/// fixed across it.
struct CanyonWindow {
    int start = 0;
    int end = 0;
};

struct Scenario {
    std::uint64_t seed = 1;
    int epochs = 300;
    double interval_s = 1.0;
    double t0 = 345600.0;

    double base_lat_deg = 35.68;
    double base_lon_deg = 139.77;
    double base_height_m = 40.0;
    Eigen::Vector3d start_offset_enu{300.0, 200.0, 0.0};  ///< rover start relative to the base

    int satellites = 8;
    std::vector<Band> bands{Band::L1, Band::L2};
    /// When set, satellites do not move; the line-of-sight geometry changes only
    /// through the rover.
    bool static_sky = false;

    double max_speed_mps = 3.0;
    double vertical_speed_std_mps = 0.05;
    double segment_s = 60.0;  ///< constant-velocity segment length

    NoiseModel noise;
    ProcessNoise process;
    double noise_scale = 1.0;        ///< multiplies every simulated noise deviation; 0 gives exact data
    double initial_guess_std_m = 3.0;
    int max_ambiguity = 40;          ///< integer ambiguities drawn uniformly from [-max, max]

    std::vector<SlipEvent> slips;
    std::vector<CanyonWindow> canyons;
    double canyon_code_factor = 10.0;
    bool canyon_entry_slips = false;  ///< every satellite loses lock at the first canyon epoch
    bool canyon_exit_slips = false;   ///< every satellite loses lock at the first epoch after a canyon
};

struct Simulation {
    Session session;
    std::vector<TruthPoint> truth;
    /// Per epoch: rover-minus-base integer ambiguity of each (band, satellite).
    std::vector<std::map<std::pair<Band, std::string>, long long>> sd_integers;
    std::vector<CanyonWindow> canyons;

    long long dd_integer(int epoch, Band band, const std::string& ref, const std::string& other) const;
};

/// Synthesizes a base/rover session. The same scenario always produces the
/// same data. Throws ValidationError when fewer than four satellites are above
/// the horizon at some epoch.
Simulation generate(const Scenario& scenario);

/// Scenario with two degraded stretches of `canyon_len` epochs.
Scenario urban_canyon_scenario(std::uint64_t seed, int epochs = 400, int canyon_len = 60);

}  // namespace rtkgssm
