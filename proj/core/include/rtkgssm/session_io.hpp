#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "rtkgssm/types.hpp"

namespace rtkgssm {

/// Read and validate a session JSON file.
///
/// Layout:
/// ```
/// { "config": { "base_pos_ecef": [x,y,z], "rover_initial_guess": [x,y,z],
///               "sampling_interval_s": T,
///               "noise":  { "code_a_m", "code_b_m", "carrier_a_m", "carrier_b_m",
///                           "vel_psd", "pos_psd" },
///               "filter": { "init_pos_std_m", "init_vel_std_mps",
///                           "bias_init_std_cycles", "gate_probability" },   (optional)
///               "gssm":   { "max_iters", "tol_m" },                         (optional)
///               "bands":  { "L1": { "freq_hz": f }, ... } },
///   "epochs": [ { "t": seconds,
///                 "sats": [ { "id": "G01", "pos_ecef": [x,y,z], "elev_rad": e,
///                             "bands": { "L1": { "cp_cycles", "pr_m", "lli" }, ... },
///                             "base": { "elev_rad": e, "bands": { ... } } } ] } ] }
/// ```
/// A satellite entry carries the rover observation in `bands` and the base
/// observation in `base`; either may be absent or empty.
///
/// Throws ParseError (syntax, missing/mistyped field; message names the field path
/// and, for syntax errors, the line) or ValidationError (domain invariants).
Session parse_session(const std::filesystem::path& path);
Session parse_session_text(std::string_view json_text);

std::string session_to_json(const Session& session);
void write_session(const std::filesystem::path& path, const Session& session);

/// Check every invariant of the observation types. Throws ValidationError.
void validate_session(const Session& session);

}  // namespace rtkgssm
