#include "rtkgssm/oracle.hpp"

#include <algorithm>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include "rtkgssm/dd_engine.hpp"
#include "rtkgssm/errors.hpp"

namespace rtkgssm {

namespace {

/// Measurement rows of one epoch against [position(3), arcs...] columns, with
/// the arc columns of the state given by `arc_offset`.
struct EpochRows {
    Eigen::MatrixXd h;  // rows x (arc_offset + n_arcs)
    Eigen::VectorXd rhs;
    Eigen::MatrixXd r;
};

int covering_arc(std::span<const AmbiguityArc> arcs, int k, Band band, const std::string& ref,
                 const std::string& other) {
    for (std::size_t a = 0; a < arcs.size(); ++a) {
        const auto& arc = arcs[a];
        if (arc.band == band && arc.ref == ref && arc.other == other && arc.covers(k)) return static_cast<int>(a);
    }
    throw AssemblyError("epoch " + std::to_string(k) + ": no arc for " + std::string(band_name(band)) + " " + ref +
                        "-" + other);
}

EpochRows epoch_rows(const Session& session, const FilterTrajectory& fwd, int k, const Eigen::Vector3d& lin,
                     std::span<const AmbiguityArc> arcs, std::span<const double> lin_arc, int pos_col, int arc_offset,
                     int cols) {
    const DdSystem dd = try_build_dd_system(session.epochs[k], lin, session.config);
    EpochRows out;
    out.h = Eigen::MatrixXd::Zero(dd.rows(), cols);
    out.rhs = dd.y;
    out.r = dd.r_dd;
    if (dd.empty()) return out;
    out.h.middleCols(pos_col, 3) = dd.h_pos;
    for (const auto& cr : dd.carrier_rows) {
        const int a = covering_arc(arcs, k, cr.band, dd.ref_id(cr), dd.other_id(cr));
        out.h(cr.row, arc_offset + a) = cr.wavelength;
        out.rhs(cr.row) -= cr.wavelength * lin_arc[a];
    }
    // Rows the forward filter gated out are not part of the problem.
    const auto& rejected = fwd.epochs[k].info.rejected;
    if (!rejected.empty()) {
        std::vector<int> keep;
        for (int i = 0; i < dd.rows(); ++i) {
            if (std::find(rejected.begin(), rejected.end(), i) == rejected.end()) keep.push_back(i);
        }
        out.h = out.h(keep, Eigen::all).eval();
        out.rhs = out.rhs(keep).eval();
        out.r = out.r(keep, keep).eval();
    }
    return out;
}

Eigen::MatrixXd inverse_spd(const Eigen::MatrixXd& m) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
    if (ldlt.info() != Eigen::Success) throw SolverError("oracle: weight block is not invertible");
    return ldlt.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
}

}  // namespace

OracleResult dense_batch_oracle(const Session& session, const FilterTrajectory& fwd,
                                std::span<const AmbiguityArc> arcs, std::span<const Eigen::Vector3d> lin_pos,
                                std::span<const double> lin_arc, const GssmOptions& options) {
    const int n = static_cast<int>(session.epochs.size());
    if (n == 0) throw ValidationError("dense_batch_oracle: session has no epochs");
    if (static_cast<int>(fwd.epochs.size()) != n || static_cast<int>(lin_pos.size()) != n ||
        lin_arc.size() != arcs.size()) {
        throw ValidationError("dense_batch_oracle: inconsistent input sizes");
    }
    const int na = static_cast<int>(arcs.size());
    const int cols = 3 * n + na;

    // Collect row blocks first, then lay them out densely.
    std::vector<Eigen::MatrixXd> a_blocks, w_blocks;
    std::vector<Eigen::VectorXd> b_blocks;
    for (int i = 0; i < na; ++i) {
        const auto [mean, var] = arc_prior(arcs[i], options);
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(1, cols);
        a(0, 3 * n + i) = 1.0;
        a_blocks.push_back(a);
        b_blocks.push_back(Eigen::VectorXd::Constant(1, mean - lin_arc[i]));
        w_blocks.push_back(Eigen::MatrixXd::Constant(1, 1, 1.0 / var));
    }
    for (int k = 0; k < n; ++k) {
        const FilterState& st = fwd.epochs[k].state;
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(3, cols);
        a.middleCols(3 * k, 3).setIdentity();
        a_blocks.push_back(a);
        b_blocks.push_back(st.position() - lin_pos[k]);
        const Eigen::Matrix3d pc = st.position_cov();
        w_blocks.push_back(inverse_spd(0.5 * (pc + pc.transpose())));

        EpochRows rows = epoch_rows(session, fwd, k, lin_pos[k], arcs, lin_arc, 3 * k, 3 * n, cols);
        if (rows.rhs.size() == 0) continue;
        a_blocks.push_back(rows.h);
        b_blocks.push_back(rows.rhs);
        w_blocks.push_back(inverse_spd(rows.r));
    }

    Eigen::Index total = 0;
    for (const auto& b : b_blocks) total += b.size();
    Eigen::MatrixXd a(total, cols);
    Eigen::VectorXd b(total);
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(total, total);
    Eigen::Index r = 0;
    for (std::size_t i = 0; i < b_blocks.size(); ++i) {
        const Eigen::Index m = b_blocks[i].size();
        a.middleRows(r, m) = a_blocks[i];
        b.segment(r, m) = b_blocks[i];
        w.block(r, r, m, m) = w_blocks[i];
        r += m;
    }

    const Eigen::MatrixXd normal = a.transpose() * w * a;
    const Eigen::VectorXd rhs = a.transpose() * w * b;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(normal);
    if (cod.rank() < cols) {
        throw SolverError("dense_batch_oracle: normal matrix is singular (rank " + std::to_string(cod.rank()) + " of " +
                          std::to_string(cols) + ")");
    }
    const Eigen::VectorXd x = cod.pseudoInverse() * rhs;

    OracleResult out;
    out.positions.resize(n);
    for (int k = 0; k < n; ++k) out.positions[k] = lin_pos[k] + x.segment<3>(3 * k);
    out.arc_values.resize(na);
    for (int i = 0; i < na; ++i) out.arc_values[i] = lin_arc[i] + x(3 * n + i);
    return out;
}

OracleResult dense_batch_oracle(const Session& session, const FilterTrajectory& fwd,
                                std::span<const AmbiguityArc> arcs, const GssmOptions& options) {
    std::vector<Eigen::Vector3d> lin(fwd.epochs.size());
    for (std::size_t k = 0; k < lin.size(); ++k) lin[k] = fwd.epochs[k].state.position();
    std::vector<double> lin_arc(arcs.size());
    for (std::size_t i = 0; i < arcs.size(); ++i) lin_arc[i] = arc_prior(arcs[i], options).first;
    return dense_batch_oracle(session, fwd, arcs, lin, lin_arc, options);
}

OracleResult dense_batch_oracle_iterated(const Session& session, const FilterTrajectory& fwd,
                                         std::span<const AmbiguityArc> arcs, int iterations,
                                         const GssmOptions& options) {
    OracleResult cur = dense_batch_oracle(session, fwd, arcs, options);
    for (int it = 1; it < iterations; ++it) {
        cur = dense_batch_oracle(session, fwd, arcs, cur.positions, cur.arc_values, options);
    }
    return cur;
}

namespace {

struct RtsRun {
    std::vector<Eigen::Vector3d> lin;
    std::vector<double> lin_arc;
    std::vector<Eigen::VectorXd> z_pred, z_filt;
    std::vector<Eigen::MatrixXd> p_pred, p_filt;
};

RtsRun rts_forward(const Session& session, const FilterTrajectory& fwd, std::span<const AmbiguityArc> arcs,
                   const GssmOptions& options) {
    const int n = static_cast<int>(session.epochs.size());
    if (n == 0) throw ValidationError("rts_smoother_oracle: session has no epochs");
    if (static_cast<int>(fwd.epochs.size()) != n) throw ValidationError("rts_smoother_oracle: trajectory size");
    const int na = static_cast<int>(arcs.size());
    const int dim = 3 + na;

    RtsRun run;
    run.lin.resize(n);
    run.lin_arc.resize(na);
    Eigen::VectorXd z = Eigen::VectorXd::Zero(dim);
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(dim, dim);
    for (int i = 0; i < na; ++i) {
        const auto [mean, var] = arc_prior(arcs[i], options);
        run.lin_arc[i] = mean;
        p(3 + i, 3 + i) = var;
    }

    for (int k = 0; k < n; ++k) {
        const FilterState& st = fwd.epochs[k].state;
        run.lin[k] = st.position();
        // Position transition is zero; the forward prior enters as input and noise.
        z.head<3>() = st.position() - run.lin[k];
        p.topRows<3>().setZero();
        p.leftCols<3>().setZero();
        const Eigen::Matrix3d pc = st.position_cov();
        p.topLeftCorner<3, 3>() = 0.5 * (pc + pc.transpose());
        run.z_pred.push_back(z);
        run.p_pred.push_back(p);

        EpochRows rows = epoch_rows(session, fwd, k, run.lin[k], arcs, run.lin_arc, 0, 3, dim);
        if (rows.rhs.size() > 0) {
            const LinearUpdate lu = kalman_update(z, p, rows.h, rows.r, rows.rhs - rows.h * z);
            if (!lu.ok) throw SolverError("rts_smoother_oracle: innovation covariance is singular");
            z = lu.x;
            p = 0.5 * (lu.p + lu.p.transpose());
        }
        run.z_filt.push_back(z);
        run.p_filt.push_back(p);
    }
    return run;
}

OracleResult to_result(const RtsRun& run, const std::vector<Eigen::VectorXd>& z) {
    OracleResult out;
    const int n = static_cast<int>(z.size());
    out.positions.resize(n);
    for (int k = 0; k < n; ++k) out.positions[k] = run.lin[k] + z[k].head<3>();
    out.arc_values = run.lin_arc;
    for (std::size_t i = 0; i < out.arc_values.size(); ++i) out.arc_values[i] += z.back()(3 + static_cast<int>(i));
    return out;
}

}  // namespace

OracleResult rts_filter_pass(const Session& session, const FilterTrajectory& fwd, std::span<const AmbiguityArc> arcs,
                             const GssmOptions& options) {
    const RtsRun run = rts_forward(session, fwd, arcs, options);
    return to_result(run, run.z_filt);
}

OracleResult rts_smoother_oracle(const Session& session, const FilterTrajectory& fwd,
                                 std::span<const AmbiguityArc> arcs, const GssmOptions& options) {
    const RtsRun run = rts_forward(session, fwd, arcs, options);
    const int n = static_cast<int>(run.z_filt.size());
    const int dim = static_cast<int>(run.z_filt.front().size());

    Eigen::MatrixXd f = Eigen::MatrixXd::Identity(dim, dim);
    f.topLeftCorner<3, 3>().setZero();

    std::vector<Eigen::VectorXd> zs(n);
    zs[n - 1] = run.z_filt[n - 1];
    for (int k = n - 2; k >= 0; --k) {
        // C = P_k|k F^T P_k+1|k^-1
        Eigen::LDLT<Eigen::MatrixXd> ldlt(run.p_pred[k + 1]);
        if (ldlt.info() != Eigen::Success) throw SolverError("rts_smoother_oracle: predicted covariance singular");
        const Eigen::MatrixXd c = ldlt.solve(f * run.p_filt[k]).transpose();
        zs[k] = run.z_filt[k] + c * (zs[k + 1] - run.z_pred[k + 1]);
    }
    return to_result(run, zs);
}

}  // namespace rtkgssm
