#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rtkgssm/ambiguity.hpp"
#include "rtkgssm/dd_engine.hpp"
#include "rtkgssm/solution.hpp"
#include "rtkgssm/types.hpp"

namespace rtkgssm {

/// Single-difference carrier bias state of one satellite on one band.
struct BiasSlot {
    Band band = Band::L1;
    std::string sat;
};

/// Kalman state [pos(3), vel(3), single-difference biases...] with covariance.
/// Biases are in cycles; the bias block grows and shrinks with the tracked
/// satellites.
struct FilterState {
    static constexpr int kBiasOffset = 6;

    double t = 0.0;
    Eigen::VectorXd x;
    Eigen::MatrixXd p;
    std::vector<BiasSlot> slots;  ///< slot i lives at state index kBiasOffset + i

    int dim() const { return static_cast<int>(x.size()); }
    Eigen::Vector3d position() const { return x.head<3>(); }
    Eigen::Vector3d velocity() const { return x.segment<3>(3); }
    Eigen::Matrix3d position_cov() const { return p.topLeftCorner<3, 3>(); }
    /// State index of the bias for (band, sat), or -1.
    int bias_index(Band band, const std::string& sat) const;
};

/// Numerical PSD check: symmetric to `sym_tol` relative and every eigenvalue
/// >= -eig_tol * trace.
bool covariance_is_psd(const Eigen::MatrixXd& p, double sym_tol = 1e-9, double eig_tol = 1e-9);

/// Time update over a positive interval: pos += vel*T, biases constant,
/// P = F P F^T + Q with Q integrating the position/velocity white noise.
FilterState predict(const FilterState& state, double dt, const ProcessNoise& q);

/// Same as predict but `dt` may be negative (backward pass). The process noise
/// is integrated over |dt|.
FilterState propagate(const FilterState& state, double dt, const ProcessNoise& q);

struct LinearUpdate {
    Eigen::VectorXd x;
    Eigen::MatrixXd p;
    double nis = 0.0;
    bool ok = false;
};

/// Kalman measurement update x + K v with the Joseph-form covariance. `ok` is
/// false (and x, p are returned unchanged) if the innovation covariance is not
/// positive definite.
LinearUpdate kalman_update(const Eigen::VectorXd& x, const Eigen::MatrixXd& p, const Eigen::MatrixXd& h,
                           const Eigen::MatrixXd& r, const Eigen::VectorXd& innovation);

struct UpdateInfo {
    bool applied = false;
    double nis = 0.0;  ///< normalized innovation squared over accepted rows
    int dim = 0;       ///< accepted rows
    std::vector<int> rejected;  ///< rows of the double-difference system dropped by the gate
};

/// Full measurement matrix of `dd` against the state layout: [H_pos, 0, lambda * D bias pattern].
/// Throws AssemblyError if a satellite in `dd` has no bias slot.
Eigen::MatrixXd measurement_matrix(const FilterState& state, const DdSystem& dd);

/// One linear update with a double-difference system built at
/// `dd.linearization`. Code rows whose normalized innovation exceeds the
/// chi-square(1) quantile of `gate_probability` are dropped (0 disables gating);
/// carrier rows are always kept.
FilterState update(const FilterState& state, const DdSystem& dd, UpdateInfo* info = nullptr,
                   double gate_probability = 0.0);

struct ArcEstimate {
    double float_cycles = 0.0;
    double variance = 0.0;
};

struct FilterEpoch {
    FilterState state;  ///< posterior
    UpdateInfo info;
    int n_dd = 0;
};

enum class PassDirection { Forward, Backward };

/// Per-epoch posteriors of one filter pass, stored in chronological order
/// regardless of direction.
struct FilterTrajectory {
    PassDirection direction = PassDirection::Forward;
    std::vector<FilterEpoch> epochs;
    /// Estimate of each arc (indexed like the arc list passed to the pass), taken
    /// at the last epoch of the arc the pass visits.
    std::vector<std::optional<ArcEstimate>> arc_estimates;

    Solution to_solution(const std::string& method) const;
};

/// Chronological pass. Biases of new satellites start at (carrier - code/lambda)
/// with the configured initial deviation; biases of lost or slipped satellites
/// are marginalized out.
FilterTrajectory run_forward(const Session& session, std::span<const AmbiguityArc> arcs = {});

/// Reverse-chronological pass with its own initialization at the last epoch.
FilterTrajectory run_backward(const Session& session, std::span<const AmbiguityArc> arcs = {});

/// Covariance-weighted sum of the position marginals,
/// x = (Pf^-1 + Pb^-1)^-1 (Pf^-1 xf + Pb^-1 xb). Falls back to the forward value
/// (flagged) when an inverse fails.
Solution combine_weighted(const FilterTrajectory& fwd, const FilterTrajectory& bwd);

/// Combination of one epoch's position marginals.
std::optional<Eigen::Vector3d> combine_positions(const Eigen::Vector3d& xf, const Eigen::Matrix3d& pf,
                                                 const Eigen::Vector3d& xb, const Eigen::Matrix3d& pb);

/// Copies arc estimates recorded by a pass into the arcs' float fields.
void apply_arc_estimates(const FilterTrajectory& trajectory, std::span<AmbiguityArc> arcs);

}  // namespace rtkgssm
