#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rtkgssm/dd_engine.hpp"
#include "rtkgssm/types.hpp"

namespace rtkgssm {

/// A double-difference carrier ambiguity that stays constant over an epoch
/// window: the value of B[ref] - B[other] on one band, in cycles.
struct AmbiguityArc {
    int id = 0;
    Band band = Band::L1;
    std::string ref;
    std::string other;
    int start = 0;  ///< first epoch index, inclusive
    int end = 0;    ///< last epoch index, inclusive
    double float_cycles = 0.0;
    double variance = 0.0;  ///< cycles^2; zero until a filter has estimated the arc
    std::optional<long long> fixed;

    bool covers(int epoch) const { return epoch >= start && epoch <= end; }
    bool is_fixed() const { return fixed.has_value(); }
    double value() const { return fixed ? static_cast<double>(*fixed) : float_cycles; }
};

/// Segments every double-difference carrier series into maximal constant
/// windows. A new arc starts when a pair becomes observable (first time or after
/// a gap), when either satellite reports loss of lock on the band at either
/// station, or when the band's reference satellite changes (every arc on the
/// band restarts). Arc ids are assigned in order of (start, band, other).
std::vector<AmbiguityArc> track_arcs(std::span<const ObservationEpoch> epochs, std::span<const DdSystem> dd_systems);

/// Per-epoch, per-carrier-row arc index (position in `arcs`).
using RowArcMap = std::vector<std::vector<int>>;

/// Maps every carrier row of every epoch to the arc covering it. Throws
/// AssemblyError naming epoch and pair when a row has no covering arc.
RowArcMap map_rows_to_arcs(std::span<const AmbiguityArc> arcs, std::span<const DdSystem> dd_systems);

struct FixOptions {
    double ratio_threshold = 3.0;
    double max_fraction = 0.25;  ///< |float - round| bound, cycles
    double max_sigma = 0.15;     ///< largest float standard deviation eligible for rounding, cycles
};

/// Rounding fixer with a scalar ratio test: accepts the nearest integer when
/// (second-nearest residual)^2 / (nearest residual)^2 >= ratio_threshold, the
/// fractional part is within max_fraction, the integer lies within 4 sigma of
/// the float and sigma <= max_sigma. Otherwise returns the arc unchanged.
AmbiguityArc try_fix(const AmbiguityArc& arc, const FixOptions& options = {});
AmbiguityArc try_fix(const AmbiguityArc& arc, double ratio_threshold);

/// Epoch is fixed when it has carrier rows and all of them map to fixed arcs.
std::vector<bool> fixed_epochs(std::span<const AmbiguityArc> arcs, const RowArcMap& rows);

/// Debug dump: `arc_id,band,ref,other,start,end,float,fixed`.
void write_arcs_csv(const std::filesystem::path& path, std::span<const AmbiguityArc> arcs);

}  // namespace rtkgssm
