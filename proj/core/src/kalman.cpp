#include "rtkgssm/kalman.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <boost/math/distributions/chi_squared.hpp>
#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "rtkgssm/errors.hpp"

namespace rtkgssm {

int FilterState::bias_index(Band band, const std::string& sat) const {
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (slots[i].band == band && slots[i].sat == sat) return kBiasOffset + static_cast<int>(i);
    }
    return -1;
}

bool covariance_is_psd(const Eigen::MatrixXd& p, double sym_tol, double eig_tol) {
    const double scale = std::max(p.cwiseAbs().maxCoeff(), 1e-300);
    if ((p - p.transpose()).cwiseAbs().maxCoeff() > sym_tol * scale) return false;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff() >= -eig_tol * std::abs(p.trace());
}

FilterState predict(const FilterState& state, double dt, const ProcessNoise& q) {
    if (!(dt > 0.0)) throw ValidationError("predict requires a positive interval");
    return propagate(state, dt, q);
}

FilterState propagate(const FilterState& state, double dt, const ProcessNoise& q) {
    FilterState out = state;
    out.t = state.t + dt;
    out.x.head<3>() += dt * state.x.segment<3>(3);

    // P = F P F^T with F = I + [0 dt*I; 0 0] acting on the first six states.
    Eigen::MatrixXd fp = state.p;
    fp.topRows<3>() += dt * state.p.middleRows<3>(3);
    out.p = fp;
    out.p.leftCols<3>() += dt * fp.middleCols<3>(3);

    const double a = std::abs(dt);
    const double qpp = q.vel_psd * a * a * a / 3.0 + q.pos_psd * a;
    const double qpv = q.vel_psd * dt * a / 2.0;
    const double qvv = q.vel_psd * a;
    for (int i = 0; i < 3; ++i) {
        out.p(i, i) += qpp;
        out.p(i, i + 3) += qpv;
        out.p(i + 3, i) += qpv;
        out.p(i + 3, i + 3) += qvv;
    }
    return out;
}

LinearUpdate kalman_update(const Eigen::VectorXd& x, const Eigen::MatrixXd& p, const Eigen::MatrixXd& h,
                           const Eigen::MatrixXd& r, const Eigen::VectorXd& v) {
    LinearUpdate out{x, p, 0.0, false};
    const Eigen::MatrixXd ph = p * h.transpose();
    Eigen::MatrixXd s = h * ph + r;
    s = 0.5 * (s + s.transpose());
    Eigen::LLT<Eigen::MatrixXd> llt(s);
    if (llt.info() != Eigen::Success) return out;

    const Eigen::MatrixXd k = llt.solve(ph.transpose()).transpose();
    out.x = x + k * v;
    const Eigen::MatrixXd ikh = Eigen::MatrixXd::Identity(p.rows(), p.cols()) - k * h;
    out.p = ikh * p * ikh.transpose() + k * r * k.transpose();
    out.p = 0.5 * (out.p + out.p.transpose());
    out.nis = v.dot(llt.solve(v));
    out.ok = std::isfinite(out.nis);
    if (!out.ok) {
        out.x = x;
        out.p = p;
    }
    return out;
}

Eigen::MatrixXd measurement_matrix(const FilterState& state, const DdSystem& dd) {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dd.rows(), state.dim());
    h.leftCols<3>() = dd.h_pos;
    for (const auto& row : dd.carrier_rows) {
        const int ir = state.bias_index(row.band, dd.ref_id(row));
        const int io = state.bias_index(row.band, dd.other_id(row));
        if (ir < 0 || io < 0) {
            throw AssemblyError("no bias state for " + std::string(band_name(row.band)) + " pair " + dd.ref_id(row) +
                                "-" + dd.other_id(row));
        }
        h(row.row, ir) += row.wavelength;
        h(row.row, io) -= row.wavelength;
    }
    return h;
}

FilterState update(const FilterState& state, const DdSystem& dd, UpdateInfo* info, double gate_probability) {
    UpdateInfo local;
    UpdateInfo& inf = info ? *info : local;
    inf = UpdateInfo{};
    if (dd.empty()) return state;

    const Eigen::MatrixXd h_full = measurement_matrix(state, dd);
    // Innovation: prefit minus the part of h(x) not captured by the linearization point.
    Eigen::VectorXd v = dd.y - dd.h_pos * (state.position() - dd.linearization);
    for (const auto& row : dd.carrier_rows) {
        v(row.row) -= h_full.row(row.row).tail(state.dim() - FilterState::kBiasOffset).dot(
            state.x.tail(state.dim() - FilterState::kBiasOffset));
    }

    std::vector<int> keep;
    keep.reserve(dd.rows());
    if (gate_probability > 0.0) {
        const double thr =
            boost::math::quantile(boost::math::chi_squared_distribution<double>(1.0), gate_probability);
        const Eigen::VectorXd s_diag = (h_full * state.p * h_full.transpose()).diagonal() + dd.r_dd.diagonal();
        // Carrier rows are never gated: slips are flagged explicitly, and dropping
        // carrier when the position drifts lets the filter run away.
        for (int i = 0; i < dd.rows(); ++i) {
            if (i < dd.carrier_count() || v(i) * v(i) <= thr * s_diag(i)) {
                keep.push_back(i);
            } else {
                inf.rejected.push_back(i);
            }
        }
    } else {
        for (int i = 0; i < dd.rows(); ++i) keep.push_back(i);
    }
    if (keep.empty()) return state;

    const int m = static_cast<int>(keep.size());
    Eigen::MatrixXd h(m, state.dim());
    Eigen::MatrixXd r(m, m);
    Eigen::VectorXd vv(m);
    for (int i = 0; i < m; ++i) {
        h.row(i) = h_full.row(keep[i]);
        vv(i) = v(keep[i]);
        for (int j = 0; j < m; ++j) r(i, j) = dd.r_dd(keep[i], keep[j]);
    }

    LinearUpdate lu = kalman_update(state.x, state.p, h, r, vv);
    if (!lu.ok) return state;
    FilterState out = state;
    out.x = std::move(lu.x);
    out.p = std::move(lu.p);
    inf.applied = true;
    inf.nis = lu.nis;
    inf.dim = m;
    return out;
}

namespace {

void remove_state(FilterState& s, int idx) {
    const int n = s.dim();
    const int tail = n - idx - 1;
    Eigen::VectorXd x(n - 1);
    x << s.x.head(idx), s.x.tail(tail);
    Eigen::MatrixXd p(n - 1, n - 1);
    p.topLeftCorner(idx, idx) = s.p.topLeftCorner(idx, idx);
    p.topRightCorner(idx, tail) = s.p.topRightCorner(idx, tail);
    p.bottomLeftCorner(tail, idx) = s.p.bottomLeftCorner(tail, idx);
    p.bottomRightCorner(tail, tail) = s.p.bottomRightCorner(tail, tail);
    s.x = std::move(x);
    s.p = std::move(p);
    s.slots.erase(s.slots.begin() + (idx - FilterState::kBiasOffset));
}

void add_state(FilterState& s, const BiasSlot& slot, double mean, double var) {
    const int n = s.dim();
    s.x.conservativeResize(n + 1);
    s.x(n) = mean;
    s.p.conservativeResize(n + 1, n + 1);
    s.p.row(n).setZero();
    s.p.col(n).setZero();
    s.p(n, n) = var;
    s.slots.push_back(slot);
}

bool slipped(const ObservationEpoch& e, const std::string& id, Band band) {
    for (const SatObs* s : {e.find_rover(id), e.find_base(id)}) {
        if (s && s->band(band) && s->band(band)->lock_lost) return true;
    }
    return false;
}

/// Bring the bias block in line with the satellites of `dd`. `slips` is the
/// epoch whose loss-of-lock flags separate it from the previously processed
/// epoch (the current epoch going forward, the previous one going backward).
void sync_bias_slots(FilterState& s, const ObservationEpoch& e, const ObservationEpoch* slips, const DdSystem& dd,
                     const SessionConfig& cfg) {
    std::set<std::pair<Band, std::string>> wanted;
    for (const auto& blk : dd.blocks) {
        for (const auto& id : blk.sats) wanted.emplace(blk.band, id);
    }
    for (int i = static_cast<int>(s.slots.size()) - 1; i >= 0; --i) {
        const BiasSlot& slot = s.slots[i];
        if (!wanted.count({slot.band, slot.sat}) || (slips && slipped(*slips, slot.sat, slot.band))) {
            remove_state(s, FilterState::kBiasOffset + i);
        }
    }
    const double var0 = cfg.filter.bias_init_std_cycles * cfg.filter.bias_init_std_cycles;
    for (const auto& blk : dd.blocks) {
        for (const auto& id : blk.sats) {
            if (s.bias_index(blk.band, id) >= 0) continue;
            const BandObs& r = *e.find_rover(id)->band(blk.band);
            const BandObs& b = *e.find_base(id)->band(blk.band);
            const double mean =
                (r.carrier_cycles - b.carrier_cycles) - (r.pseudorange_m - b.pseudorange_m) / blk.wavelength;
            add_state(s, {blk.band, id}, mean, var0);
        }
    }
}

FilterState initial_state(const ObservationEpoch& e, const SessionConfig& cfg) {
    Eigen::Vector3d pos = cfg.rover_initial_guess;
    try {
        pos = code_position_fix(e, cfg.rover_initial_guess, cfg);
    } catch (const GeometryError&) {
        // keep the configured guess
    }
    FilterState s;
    s.t = e.t;
    s.x = Eigen::VectorXd::Zero(FilterState::kBiasOffset);
    s.x.head<3>() = pos;
    s.p = Eigen::MatrixXd::Zero(FilterState::kBiasOffset, FilterState::kBiasOffset);
    const double sp = cfg.filter.init_pos_std_m, sv = cfg.filter.init_vel_std_mps;
    s.p.diagonal() << sp * sp, sp * sp, sp * sp, sv * sv, sv * sv, sv * sv;
    return s;
}

ArcEstimate arc_from_state(const FilterState& s, const AmbiguityArc& arc) {
    const int ir = s.bias_index(arc.band, arc.ref);
    const int io = s.bias_index(arc.band, arc.other);
    if (ir < 0 || io < 0) return {std::nan(""), std::nan("")};
    return {s.x(ir) - s.x(io), s.p(ir, ir) + s.p(io, io) - 2.0 * s.p(ir, io)};
}

FilterTrajectory run_pass(const Session& session, std::span<const AmbiguityArc> arcs, PassDirection dir) {
    FilterTrajectory traj;
    traj.direction = dir;
    traj.arc_estimates.assign(arcs.size(), std::nullopt);
    const int n = static_cast<int>(session.epochs.size());
    if (n == 0) return traj;
    traj.epochs.resize(n);

    // Arcs closing at each epoch, as seen by this pass.
    std::vector<std::vector<int>> closing(n);
    for (std::size_t a = 0; a < arcs.size(); ++a) {
        const int k = dir == PassDirection::Forward ? arcs[a].end : arcs[a].start;
        if (k >= 0 && k < n) closing[k].push_back(static_cast<int>(a));
    }

    const auto& cfg = session.config;
    const bool fwd = dir == PassDirection::Forward;
    FilterState state = initial_state(session.epochs[fwd ? 0 : n - 1], cfg);
    for (int step = 0; step < n; ++step) {
        const int k = fwd ? step : n - 1 - step;
        const ObservationEpoch& e = session.epochs[k];
        if (step > 0) state = propagate(state, e.t - state.t, cfg.process);

        const DdSystem dd = try_build_dd_system(e, state.position(), cfg);
        const ObservationEpoch* slips = fwd ? &e : (step > 0 ? &session.epochs[k + 1] : nullptr);
        sync_bias_slots(state, e, slips, dd, cfg);
        FilterEpoch fe;
        state = update(state, dd, &fe.info, cfg.filter.gate_probability);
        fe.n_dd = dd.rows();
        fe.state = state;
        for (int a : closing[k]) traj.arc_estimates[a] = arc_from_state(state, arcs[a]);
        traj.epochs[k] = std::move(fe);
    }
    return traj;
}

}  // namespace

FilterTrajectory run_forward(const Session& session, std::span<const AmbiguityArc> arcs) {
    return run_pass(session, arcs, PassDirection::Forward);
}

FilterTrajectory run_backward(const Session& session, std::span<const AmbiguityArc> arcs) {
    return run_pass(session, arcs, PassDirection::Backward);
}

Solution FilterTrajectory::to_solution(const std::string& method) const {
    Solution sol{method, {}};
    sol.epochs.reserve(epochs.size());
    for (const auto& e : epochs) {
        SolutionEpoch se;
        se.t = e.state.t;
        se.pos = e.state.position();
        se.fix = e.info.applied ? FixStatus::Float : FixStatus::None;
        se.n_dd = e.info.dim;
        se.flagged = !e.info.applied;
        sol.epochs.push_back(se);
    }
    return sol;
}

std::optional<Eigen::Vector3d> combine_positions(const Eigen::Vector3d& xf, const Eigen::Matrix3d& pf,
                                                 const Eigen::Vector3d& xb, const Eigen::Matrix3d& pb) {
    Eigen::LLT<Eigen::Matrix3d> lf(pf), lb(pb);
    if (lf.info() != Eigen::Success || lb.info() != Eigen::Success) return std::nullopt;
    const Eigen::Matrix3d wf = lf.solve(Eigen::Matrix3d::Identity());
    const Eigen::Matrix3d wb = lb.solve(Eigen::Matrix3d::Identity());
    Eigen::LLT<Eigen::Matrix3d> li(wf + wb);
    if (li.info() != Eigen::Success) return std::nullopt;
    const Eigen::Vector3d x = li.solve(wf * xf + wb * xb);
    if (!x.allFinite()) return std::nullopt;
    return x;
}

Solution combine_weighted(const FilterTrajectory& fwd, const FilterTrajectory& bwd) {
    if (fwd.epochs.size() != bwd.epochs.size()) throw ValidationError("combine_weighted: epoch grids differ");
    Solution sol{"fbkf", {}};
    sol.epochs.reserve(fwd.epochs.size());
    for (std::size_t k = 0; k < fwd.epochs.size(); ++k) {
        const FilterState& f = fwd.epochs[k].state;
        const FilterState& b = bwd.epochs[k].state;
        if (std::abs(f.t - b.t) > 1e-9) throw ValidationError("combine_weighted: epoch times differ");
        SolutionEpoch se;
        se.t = f.t;
        se.n_dd = std::max(fwd.epochs[k].info.dim, bwd.epochs[k].info.dim);
        const bool any_update = fwd.epochs[k].info.applied || bwd.epochs[k].info.applied;
        se.fix = any_update ? FixStatus::Float : FixStatus::None;
        if (auto x = combine_positions(f.position(), f.position_cov(), b.position(), b.position_cov())) {
            se.pos = *x;
        } else {
            se.pos = f.position();
            se.flagged = true;
        }
        sol.epochs.push_back(se);
    }
    return sol;
}

void apply_arc_estimates(const FilterTrajectory& trajectory, std::span<AmbiguityArc> arcs) {
    for (std::size_t a = 0; a < arcs.size() && a < trajectory.arc_estimates.size(); ++a) {
        if (const auto& est = trajectory.arc_estimates[a]; est && std::isfinite(est->float_cycles)) {
            arcs[a].float_cycles = est->float_cycles;
            arcs[a].variance = est->variance;
        }
    }
}

}  // namespace rtkgssm
