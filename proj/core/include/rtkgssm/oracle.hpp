#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "rtkgssm/ambiguity.hpp"
#include "rtkgssm/gssm.hpp"
#include "rtkgssm/kalman.hpp"
#include "rtkgssm/types.hpp"

namespace rtkgssm {

/// Reference estimates: one position per epoch and one value per arc.
struct OracleResult {
    std::vector<Eigen::Vector3d> positions;
    std::vector<double> arc_values;
};

/// Brute-force solve of the batch problem for small instances: assembles the
/// stacked A, block-diagonal P and b densely (independently of build_gssm),
/// then evaluates (A^T P^-1 A)^+ A^T P^-1 b once about `lin_pos` / `lin_arc`.
/// Priors are the forward posteriors and arc_prior(). Throws ValidationError on
/// an empty session and SolverError if the normal matrix is singular.
OracleResult dense_batch_oracle(const Session& session, const FilterTrajectory& fwd,
                                std::span<const AmbiguityArc> arcs, std::span<const Eigen::Vector3d> lin_pos,
                                std::span<const double> lin_arc, const GssmOptions& options = {});

/// As above, linearized at the forward trajectory and the arc prior means.
OracleResult dense_batch_oracle(const Session& session, const FilterTrajectory& fwd,
                                std::span<const AmbiguityArc> arcs, const GssmOptions& options = {});

/// Repeats the dense solve `iterations` times, re-linearizing at each result.
OracleResult dense_batch_oracle_iterated(const Session& session, const FilterTrajectory& fwd,
                                         std::span<const AmbiguityArc> arcs, int iterations,
                                         const GssmOptions& options = {});

/// The same problem written as a discrete-time state-space model and solved by
/// a Kalman filter followed by a Rauch-Tung-Striebel pass. The state is the
/// position correction plus every arc as a time series with identity transition
/// and no process noise; position has no memory between epochs and is driven by
/// the forward prior as input and process noise. Linearized once at the forward
/// trajectory, like a single Gauss-Newton step.
OracleResult rts_smoother_oracle(const Session& session, const FilterTrajectory& fwd,
                                 std::span<const AmbiguityArc> arcs, const GssmOptions& options = {});

/// Filtered (not smoothed) positions of the same model, for diagnostics.
OracleResult rts_filter_pass(const Session& session, const FilterTrajectory& fwd, std::span<const AmbiguityArc> arcs,
                             const GssmOptions& options = {});

}  // namespace rtkgssm
