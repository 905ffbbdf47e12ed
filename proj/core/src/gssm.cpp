#include "rtkgssm/gssm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <tuple>

#include <Eigen/Cholesky>

#include "rtkgssm/dd_engine.hpp"
#include "rtkgssm/errors.hpp"

namespace rtkgssm {

namespace {

std::vector<int> kept_rows(int rows, const std::vector<int>& excluded) {
    std::vector<int> keep;
    for (int i = 0; i < rows; ++i) {
        if (std::find(excluded.begin(), excluded.end(), i) == excluded.end()) keep.push_back(i);
    }
    return keep;
}

void assemble_factors(const Session& session, GssmSystem& sys) {
    sys.factors.clear();
    const auto& cfg = session.config;
    std::vector<int> order = sys.options.epoch_order;
    if (order.empty()) {
        order.resize(sys.n_epochs);
        std::iota(order.begin(), order.end(), 0);
    }

    for (int a = 0; a < sys.n_arcs; ++a) {
        Factor f;
        f.kind = FactorKind::ArcPrior;
        f.arc = a;
        f.cols = {sys.arc_col[a]};
        f.jac = Eigen::MatrixXd::Ones(1, 1);
        f.rhs = Eigen::VectorXd::Constant(1, sys.arc_mean[a] - sys.lin_arc[a]);
        f.cov = Eigen::MatrixXd::Constant(1, 1, sys.arc_var[a]);
        sys.factors.push_back(std::move(f));
    }

    for (int k : order) {
        const int c0 = sys.epoch_col[k];
        Factor prior;
        prior.kind = FactorKind::PositionPrior;
        prior.epoch = k;
        prior.cols = {c0, c0 + 1, c0 + 2};
        prior.jac = Eigen::MatrixXd::Identity(3, 3);
        prior.rhs = sys.prior_pos[k] - sys.lin_pos[k];
        prior.cov = sys.prior_cov[k];
        sys.factors.push_back(std::move(prior));

        const DdSystem dd = try_build_dd_system(session.epochs[k], sys.lin_pos[k], cfg);
        sys.n_dd[k] = dd.rows() - static_cast<int>(sys.excluded_rows[k].size());
        if (dd.empty()) continue;
        const auto& rows = sys.row_arc[k];
        if (static_cast<int>(rows.size()) != dd.carrier_count()) {
            throw AssemblyError("epoch " + std::to_string(k) + ": carrier rows do not match the arc map");
        }

        Factor meas;
        meas.kind = FactorKind::Measurement;
        meas.epoch = k;
        meas.cols = {c0, c0 + 1, c0 + 2};
        std::vector<int> local(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const int col = sys.arc_col[rows[i]];
            auto it = std::find(meas.cols.begin(), meas.cols.end(), col);
            local[i] = static_cast<int>(it - meas.cols.begin());
            if (it == meas.cols.end()) meas.cols.push_back(col);
        }
        meas.jac = Eigen::MatrixXd::Zero(dd.rows(), static_cast<Eigen::Index>(meas.cols.size()));
        meas.jac.leftCols<3>() = dd.h_pos;
        meas.rhs = dd.y;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const CarrierRow& cr = dd.carrier_rows[i];
            meas.jac(cr.row, local[i]) = cr.wavelength;
            meas.rhs(cr.row) -= cr.wavelength * sys.lin_arc[rows[i]];
        }
        meas.cov = dd.r_dd;
        if (!sys.excluded_rows[k].empty()) {
            const std::vector<int> keep = kept_rows(dd.rows(), sys.excluded_rows[k]);
            if (keep.empty()) continue;
            meas.jac = meas.jac(keep, Eigen::all).eval();
            meas.rhs = meas.rhs(keep).eval();
            meas.cov = meas.cov(keep, keep).eval();
        }
        sys.factors.push_back(std::move(meas));
    }

    if (sys.options.position_rw_psd) {
        const double q = *sys.options.position_rw_psd;
        for (int k = 0; k + 1 < sys.n_epochs; ++k) {
            const double dt = sys.times[k + 1] - sys.times[k];
            Factor rw;
            rw.kind = FactorKind::RandomWalk;
            rw.epoch = k + 1;
            const int ca = sys.epoch_col[k], cb = sys.epoch_col[k + 1];
            rw.cols = {ca, ca + 1, ca + 2, cb, cb + 1, cb + 2};
            rw.jac.resize(3, 6);
            rw.jac << -Eigen::Matrix3d::Identity(), Eigen::Matrix3d::Identity();
            rw.rhs = -(sys.lin_pos[k + 1] - sys.lin_pos[k]);
            rw.cov = Eigen::Matrix3d::Identity() * q * dt;
            sys.factors.push_back(std::move(rw));
        }
    }
}

}  // namespace

std::pair<double, double> arc_prior(const AmbiguityArc& arc, const GssmOptions& options) {
    if (arc.is_fixed()) return {static_cast<double>(*arc.fixed), options.fixed_variance};
    const bool finite = std::isfinite(arc.float_cycles);
    if (finite && arc.variance > 0.0) return {arc.float_cycles, arc.variance};
    return {finite ? arc.float_cycles : 0.0, options.unestimated_arc_variance};
}

int GssmSystem::rows() const {
    int r = 0;
    for (const auto& f : factors) r += static_cast<int>(f.rhs.size());
    return r;
}

SparseLsq GssmSystem::whitened() const {
    SparseLsq lsq(0, cols());
    for (const auto& f : factors) {
        Eigen::LLT<Eigen::MatrixXd> llt(f.cov);
        if (llt.info() != Eigen::Success) {
            throw AssemblyError("factor covariance is not positive definite (epoch " + std::to_string(f.epoch) +
                                ", arc " + std::to_string(f.arc) + ")");
        }
        const Eigen::MatrixXd wj = llt.matrixL().solve(f.jac);
        const Eigen::VectorXd wr = llt.matrixL().solve(f.rhs);
        const int r0 = lsq.add_rows(static_cast<int>(f.rhs.size()));
        for (Eigen::Index i = 0; i < wj.rows(); ++i) {
            lsq.set_rhs(r0 + static_cast<int>(i), wr(i));
            for (Eigen::Index j = 0; j < wj.cols(); ++j) lsq.add(r0 + static_cast<int>(i), f.cols[j], wj(i, j));
        }
    }
    return lsq;
}

double GssmSystem::cost() const {
    double c = 0.0;
    for (const auto& f : factors) {
        Eigen::LLT<Eigen::MatrixXd> llt(f.cov);
        c += llt.matrixL().solve(f.rhs).squaredNorm();
    }
    return c;
}

GssmSystem build_gssm(const Session& session, const FilterTrajectory& fwd, std::span<const AmbiguityArc> arcs,
                      const GssmOptions& options) {
    const int n = static_cast<int>(session.epochs.size());
    if (static_cast<int>(fwd.epochs.size()) != n) {
        throw AssemblyError("forward trajectory does not cover every epoch");
    }
    GssmSystem sys;
    sys.options = options;
    sys.n_epochs = n;
    sys.n_arcs = static_cast<int>(arcs.size());

    std::vector<int> order = options.epoch_order;
    if (order.empty()) {
        order.resize(n);
        std::iota(order.begin(), order.end(), 0);
    } else {
        std::vector<int> sorted = order;
        std::sort(sorted.begin(), sorted.end());
        for (int i = 0; i < n; ++i) {
            if (static_cast<int>(sorted.size()) != n || sorted[i] != i) {
                throw AssemblyError("epoch_order is not a permutation of the epochs");
            }
        }
    }
    sys.epoch_col.assign(n, 0);
    for (int slot = 0; slot < n; ++slot) sys.epoch_col[order[slot]] = 3 * slot;
    sys.arc_col.resize(arcs.size());
    for (int a = 0; a < sys.n_arcs; ++a) sys.arc_col[a] = 3 * n + a;

    sys.times.resize(n);
    sys.prior_pos.resize(n);
    sys.prior_cov.resize(n);
    sys.n_dd.assign(n, 0);
    sys.excluded_rows.resize(n);
    std::vector<DdSystem> dds(n);
    for (int k = 0; k < n; ++k) {
        const FilterState& st = fwd.epochs[k].state;
        sys.times[k] = session.epochs[k].t;
        sys.prior_pos[k] = st.position();
        Eigen::Matrix3d pc = st.position_cov();
        sys.prior_cov[k] = 0.5 * (pc + pc.transpose());
        dds[k] = try_build_dd_system(session.epochs[k], st.position(), session.config);
        sys.excluded_rows[k] = fwd.epochs[k].info.rejected;
    }
    sys.row_arc = map_rows_to_arcs(arcs, dds);
    sys.fixed_epoch = fixed_epochs(arcs, sys.row_arc);

    sys.arc_mean.resize(arcs.size());
    sys.arc_var.resize(arcs.size());
    for (std::size_t a = 0; a < arcs.size(); ++a) {
        std::tie(sys.arc_mean[a], sys.arc_var[a]) = arc_prior(arcs[a], options);
    }
    sys.lin_pos = sys.prior_pos;
    sys.lin_arc = sys.arc_mean;
    assemble_factors(session, sys);
    return sys;
}

GssmSystem relinearize(const Session& session, const GssmSystem& sys, std::vector<Eigen::Vector3d> pos,
                       std::vector<double> arc_values) {
    GssmSystem out = sys;
    out.lin_pos = std::move(pos);
    out.lin_arc = std::move(arc_values);
    assemble_factors(session, out);
    return out;
}

Eigen::VectorXd solve_delta(const GssmSystem& sys) { return solve_normal(sys.whitened()).x; }

GssmResult solve_gssm(const Session& session, const GssmSystem& sys) {
    return solve_gssm(session, sys, sys.options.max_iters, sys.options.tol_m);
}

GssmResult solve_gssm(const Session& session, const GssmSystem& sys, int max_iters, double tol_m) {
    GssmResult res;
    res.initial_cost = sys.cost();
    GssmSystem cur = sys;
    double cur_cost = res.initial_cost;
    for (int it = 0; it < std::max(1, max_iters); ++it) {
        const Eigen::VectorXd dx = solve_delta(cur);
        double max_step = 0.0;
        for (int k = 0; k < cur.n_epochs; ++k) {
            max_step = std::max(max_step, dx.segment<3>(cur.epoch_col[k]).cwiseAbs().maxCoeff());
        }
        // The weights move with the elevations, so a full step can raise the
        // cost slightly; halve it until it does not.
        bool accepted = false;
        double scale = 1.0;
        for (int attempt = 0; attempt < 8 && !accepted; ++attempt, scale *= 0.5) {
            std::vector<Eigen::Vector3d> pos = cur.lin_pos;
            std::vector<double> arc = cur.lin_arc;
            for (int k = 0; k < cur.n_epochs; ++k) pos[k] += scale * dx.segment<3>(cur.epoch_col[k]);
            for (int a = 0; a < cur.n_arcs; ++a) arc[a] += scale * dx(cur.arc_col[a]);
            GssmSystem next = relinearize(session, cur, std::move(pos), std::move(arc));
            const double next_cost = next.cost();
            if (next_cost <= cur_cost) {
                cur = std::move(next);
                cur_cost = next_cost;
                accepted = true;
            }
        }
        res.iterations = it + 1;
        if (!accepted || max_step < tol_m) {
            // No descent left along the Gauss-Newton direction.
            res.converged = accepted || max_step < 1e3 * tol_m;
            break;
        }
    }
    res.final_cost = cur.cost();
    res.arc_values = cur.lin_arc;
    res.solution.method = "gssm";
    res.solution.epochs.reserve(cur.n_epochs);
    for (int k = 0; k < cur.n_epochs; ++k) {
        SolutionEpoch se;
        se.t = cur.times[k];
        se.pos = cur.lin_pos[k];
        se.n_dd = cur.n_dd[k];
        se.fix = cur.n_dd[k] == 0 ? FixStatus::None : (cur.fixed_epoch[k] ? FixStatus::Fixed : FixStatus::Float);
        se.flagged = !res.converged;
        res.solution.epochs.push_back(se);
    }
    return res;
}

std::vector<std::vector<double>> arc_series(const GssmSystem& sys, std::span<const double> arc_values) {
    std::vector<std::vector<double>> out(sys.row_arc.size());
    for (std::size_t k = 0; k < sys.row_arc.size(); ++k) {
        for (int a : sys.row_arc[k]) out[k].push_back(arc_values[a]);
    }
    return out;
}

void write_system_dump(const std::filesystem::path& matrix_path, const std::filesystem::path& rhs_path,
                       const GssmSystem& sys) {
    const SparseLsq lsq = sys.whitened();
    const SparseMatrix a = lsq.matrix();
    std::ofstream m(matrix_path, std::ios::binary);
    if (!m) throw Error("cannot write " + matrix_path.string());
    m << "%%MatrixMarket matrix coordinate real general\n";
    m << a.rows() << ' ' << a.cols() << ' ' << a.nonZeros() << '\n';
    char buf[64];
    for (int c = 0; c < a.outerSize(); ++c) {
        for (SparseMatrix::InnerIterator it(a, c); it; ++it) {
            std::snprintf(buf, sizeof buf, "%.17g", it.value());
            m << it.row() + 1 << ' ' << it.col() + 1 << ' ' << buf << '\n';
        }
    }
    std::ofstream v(rhs_path, std::ios::binary);
    if (!v) throw Error("cannot write " + rhs_path.string());
    v << "%%MatrixMarket matrix array real general\n" << lsq.rhs().size() << " 1\n";
    for (Eigen::Index i = 0; i < lsq.rhs().size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", lsq.rhs()(i));
        v << buf << '\n';
    }
}

}  // namespace rtkgssm
