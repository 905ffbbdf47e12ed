#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "rtkgssm/ambiguity.hpp"
#include "rtkgssm/kalman.hpp"
#include "rtkgssm/solution.hpp"
#include "rtkgssm/sparse_lsq.hpp"
#include "rtkgssm/types.hpp"

namespace rtkgssm {

struct GssmOptions {
    int max_iters = 5;
    double tol_m = 1.0e-4;
    double fixed_variance = 1.0e-8;          ///< prior variance of a fixed arc, cycles^2
    double unestimated_arc_variance = 1.0e8;  ///< prior variance when no filter estimate exists
    /// Between-epoch position random walk, m^2/s per axis. Disabled when unset.
    std::optional<double> position_rw_psd;
    /// Column-block order of the epochs; empty means chronological.
    std::vector<int> epoch_order;
};

enum class FactorKind { ArcPrior, PositionPrior, Measurement, RandomWalk };

/// One row block of the stacked system: jac * delta ~ rhs with noise `cov`.
struct Factor {
    FactorKind kind = FactorKind::Measurement;
    int epoch = -1;
    int arc = -1;
    std::vector<int> cols;  ///< global column of each jac column
    Eigen::MatrixXd jac;
    Eigen::VectorXd rhs;    ///< residual at the linearization point
    Eigen::MatrixXd cov;
};

/// Block least-squares system over per-epoch positions and one constant per
/// ambiguity arc, expressed in corrections about a linearization point.
struct GssmSystem {
    int n_epochs = 0;
    int n_arcs = 0;
    std::vector<int> epoch_col;  ///< first of three position columns per epoch
    std::vector<int> arc_col;
    std::vector<Factor> factors;

    std::vector<Eigen::Vector3d> lin_pos;
    std::vector<double> lin_arc;

    std::vector<Eigen::Vector3d> prior_pos;
    std::vector<Eigen::Matrix3d> prior_cov;
    std::vector<double> arc_mean;
    std::vector<double> arc_var;

    RowArcMap row_arc;
    /// Per epoch, double-difference rows left out because the forward filter's
    /// gate rejected them.
    std::vector<std::vector<int>> excluded_rows;
    std::vector<double> times;
    std::vector<int> n_dd;
    std::vector<bool> fixed_epoch;
    GssmOptions options;

    int cols() const { return 3 * n_epochs + n_arcs; }
    int rows() const;
    /// Rows and right-hand side premultiplied by the inverse Cholesky factor of each block covariance.
    SparseLsq whitened() const;
    /// Weighted squared residual at the linearization point.
    double cost() const;
};

/// Prior (mean, variance) of an arc: the fixed integer with `fixed_variance`,
/// else the filter float estimate, else a diffuse prior.
std::pair<double, double> arc_prior(const AmbiguityArc& arc, const GssmOptions& options);

/// Assembles the system at the forward-filter linearization point: a position
/// prior per epoch (forward posterior mean and 3x3 marginal), a prior per arc
/// (forward float estimate, or the fixed integer with `fixed_variance`), and the
/// double-difference rows of every epoch with carrier rows tied to their arc
/// column. Rows the forward filter rejected at its innovation gate are left
/// out. Velocity is not part of the system.
GssmSystem build_gssm(const Session& session, const FilterTrajectory& fwd, std::span<const AmbiguityArc> arcs,
                      const GssmOptions& options = {});

/// Re-evaluates residuals and Jacobians of `sys` at a new point.
GssmSystem relinearize(const Session& session, const GssmSystem& sys, std::vector<Eigen::Vector3d> pos,
                       std::vector<double> arc_values);

/// Correction vector minimizing the whitened residual of `sys`.
Eigen::VectorXd solve_delta(const GssmSystem& sys);

struct GssmResult {
    Solution solution;
    std::vector<double> arc_values;  ///< one value per arc, cycles
    int iterations = 0;
    bool converged = false;
    double initial_cost = 0.0;
    double final_cost = 0.0;
};

/// Gauss-Newton: solve, apply the correction, re-linearize; stop once the
/// largest position correction is below `tol_m` or after `max_iters` solves.
/// A correction that would raise the cost is halved (up to 8 times) and the
/// iteration stops if none lowers it, so the final cost never exceeds the
/// initial one.
GssmResult solve_gssm(const Session& session, const GssmSystem& sys, int max_iters, double tol_m);
GssmResult solve_gssm(const Session& session, const GssmSystem& sys);

/// Per-epoch, per-carrier-row ambiguity values implied by the arc solution.
std::vector<std::vector<double>> arc_series(const GssmSystem& sys, std::span<const double> arc_values);

/// Writes the whitened matrix (Matrix Market coordinate) and right-hand side
/// (Matrix Market array).
void write_system_dump(const std::filesystem::path& matrix_path, const std::filesystem::path& rhs_path,
                       const GssmSystem& sys);

}  // namespace rtkgssm
