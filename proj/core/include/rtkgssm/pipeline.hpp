#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rtkgssm/ambiguity.hpp"
#include "rtkgssm/gssm.hpp"
#include "rtkgssm/kalman.hpp"
#include "rtkgssm/solution.hpp"
#include "rtkgssm/types.hpp"

namespace rtkgssm {

inline constexpr std::array<std::string_view, 4> kMethods{"fwd", "bwd", "fbkf", "gssm"};

/// Adds implied prerequisites (gssm and bwd need fwd, fbkf needs fwd and bwd)
/// and returns the methods in execution order. Throws ValidationError on an
/// empty request or an unknown name.
std::vector<std::string> resolve_methods(std::span<const std::string> requested);

struct PipelineOptions {
    std::vector<std::string> methods{"fwd", "fbkf", "gssm"};
    FixOptions fix;
    GssmOptions gssm;
    /// Epoch windows [first, last] whose arcs are never fixed.
    std::vector<std::pair<int, int>> no_fix_windows;
};

struct PipelineResult {
    std::vector<std::string> methods;  ///< executed, in order
    std::map<std::string, Solution> solutions;
    std::vector<AmbiguityArc> arcs;
    std::optional<FilterTrajectory> fwd;
    std::optional<FilterTrajectory> bwd;
    std::optional<GssmSystem> system;
    std::optional<GssmResult> gssm;
};

/// Double-difference systems of every epoch at the configured initial guess;
/// their row layout is all that arc tracking needs.
std::vector<DdSystem> layout_systems(const Session& session);

/// Arcs of the session, float estimates from `fwd`, fixed where the fixer
/// accepts and the arc avoids every no-fix window.
std::vector<AmbiguityArc> resolve_arcs(const Session& session, const FilterTrajectory& fwd,
                                       std::span<const AmbiguityArc> tracked, const PipelineOptions& options);

/// Runs the selected estimators in dependency order, in memory.
PipelineResult run_pipeline(const Session& session, const PipelineOptions& options);

struct RunConfig {
    std::filesystem::path input;
    std::optional<std::filesystem::path> truth;
    std::vector<std::string> methods{"fwd", "fbkf", "gssm"};
    std::filesystem::path out;
    std::optional<int> gssm_iters;
    std::optional<double> gssm_tol;
    double fix_ratio = 3.0;
    bool dump_arcs = false;
    bool dump_system = false;
};

/// Reads `key = value` lines (`#` starts a comment). Keys: input, truth,
/// methods (comma separated), out, gssm_iters, gssm_tol, fix_ratio, dump_arcs,
/// dump_system. Throws ParseError on unknown keys or bad values.
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

/// File-based run: writes `<out>/<method>.csv` per method and `<out>/metrics.json`
/// when truth is given. Returns 0 on success, 2 when an input file is missing
/// (nothing written) and 1 on any other failure (outputs written so far are kept).
int run(const RunConfig& config, std::ostream& log);

}  // namespace rtkgssm
