#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Dense>

#include "rtkgssm/errors.hpp"
#include "rtkgssm/gssm.hpp"
#include "rtkgssm/pipeline.hpp"
#include "rtkgssm/sim.hpp"

using namespace rtkgssm;

namespace {

struct Case {
    Simulation sim;
    FilterTrajectory fwd;
    std::vector<AmbiguityArc> arcs;
};

Case prepare(Simulation sim) {
    Case s{std::move(sim), {}, {}};
    const auto tracked = track_arcs(s.sim.session.epochs, layout_systems(s.sim.session));
    s.fwd = run_forward(s.sim.session, tracked);
    s.arcs = resolve_arcs(s.sim.session, s.fwd, tracked, {});
    return s;
}

Case prepare(const Scenario& sc) { return prepare(generate(sc)); }

Scenario noisy(std::uint64_t seed, int epochs) {
    Scenario sc;
    sc.seed = seed;
    sc.epochs = epochs;
    sc.satellites = 7;
    sc.slips = {{epochs / 2, "G04", std::nullopt}};
    return sc;
}

int count_kind(const GssmSystem& sys, FactorKind kind) {
    int rows = 0;
    for (const auto& f : sys.factors) {
        if (f.kind == kind) rows += static_cast<int>(f.rhs.size());
    }
    return rows;
}

}  // namespace

TEST(BuildGssm, OneEpochThreeSatellitesOneBand) {
    Scenario sc;
    sc.seed = 2;
    sc.epochs = 1;
    sc.satellites = 4;
    sc.bands = {Band::L1};
    Simulation sim = generate(sc);
    sim.session.epochs[0].rover.pop_back();
    sim.session.epochs[0].base.pop_back();
    const Case s = prepare(std::move(sim));
    ASSERT_EQ(s.arcs.size(), 2u);
    const GssmSystem sys = build_gssm(s.sim.session, s.fwd, s.arcs);
    EXPECT_EQ(sys.cols(), 5);
    EXPECT_EQ(count_kind(sys, FactorKind::ArcPrior), 2);
    EXPECT_EQ(count_kind(sys, FactorKind::PositionPrior), 3);
    EXPECT_EQ(count_kind(sys, FactorKind::Measurement), 4);
    EXPECT_EQ(sys.rows(), 9);
    const SparseLsq w = sys.whitened();
    EXPECT_EQ(w.rows(), 9);
    EXPECT_EQ(w.cols(), 5);
}

TEST(BuildGssm, ColumnsAndArcReferences) {
    const Case s = prepare(noisy(3, 30));
    const GssmSystem sys = build_gssm(s.sim.session, s.fwd, s.arcs);
    EXPECT_EQ(sys.cols(), 3 * 30 + static_cast<int>(s.arcs.size()));
    int measurement_factors = 0;
    for (const auto& f : sys.factors) {
        if (f.kind != FactorKind::Measurement) continue;
        ++measurement_factors;
        const DdSystem dd = try_build_dd_system(s.sim.session.epochs[f.epoch], sys.lin_pos[f.epoch], s.sim.session.config);
        for (Eigen::Index r = 0; r < f.jac.rows(); ++r) {
            int arc_refs = 0;
            for (std::size_t c = 3; c < f.cols.size(); ++c) arc_refs += f.jac(r, static_cast<Eigen::Index>(c)) != 0.0;
            // Carrier rows come first; gated rows are code rows only.
            EXPECT_EQ(arc_refs, r < dd.carrier_count() ? 1 : 0);
        }
    }
    EXPECT_EQ(measurement_factors, 30);
    // Every weight block is positive definite.
    for (const auto& f : sys.factors) EXPECT_EQ(Eigen::LLT<Eigen::MatrixXd>(f.cov).info(), Eigen::Success);
}

TEST(BuildGssm, ZeroNoiseFixedPointAtTruth) {
    Scenario sc;
    sc.seed = 6;
    sc.epochs = 15;
    sc.noise_scale = 0.0;
    sc.initial_guess_std_m = 0.0;
    Case s = prepare(sc);
    for (auto& a : s.arcs) a.fixed = s.sim.dd_integer(a.start, a.band, a.ref, a.other);
    const GssmSystem built = build_gssm(s.sim.session, s.fwd, s.arcs);
    std::vector<Eigen::Vector3d> truth;
    for (const auto& t : s.sim.truth) truth.push_back(t.pos);
    std::vector<double> ints;
    for (const auto& a : s.arcs) ints.push_back(static_cast<double>(*a.fixed));
    const GssmSystem sys = relinearize(s.sim.session, built, truth, ints);
    for (const auto& f : sys.factors) {
        if (f.kind == FactorKind::Measurement) EXPECT_LT(f.rhs.cwiseAbs().maxCoeff(), 1e-8);
    }
    const Eigen::VectorXd dx = solve_delta(sys);
    EXPECT_LT(dx.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(BuildGssm, FixedArcsGiveEpochwiseLeastSquares) {
    Case s = prepare(noisy(9, 25));
    for (auto& a : s.arcs) a.fixed = s.sim.dd_integer(a.start, a.band, a.ref, a.other);
    const GssmSystem sys = build_gssm(s.sim.session, s.fwd, s.arcs);
    const GssmResult r = solve_gssm(s.sim.session, sys, 1, 1e-4);
    // Independent per-epoch weighted least squares with the integers removed.
    for (int k = 0; k < 25; ++k) {
        const Eigen::Vector3d lin = sys.lin_pos[k];
        DdSystem dd = build_dd_system(s.sim.session.epochs[k], lin, s.sim.session.config);
        Eigen::VectorXd y = dd.y;
        for (std::size_t i = 0; i < dd.carrier_rows.size(); ++i) {
            const auto& cr = dd.carrier_rows[i];
            y(cr.row) -= cr.wavelength * static_cast<double>(s.sim.dd_integer(k, cr.band, dd.ref_id(cr), dd.other_id(cr)));
        }
        std::vector<int> keep;
        for (int i = 0; i < dd.rows(); ++i) {
            if (std::find(sys.excluded_rows[k].begin(), sys.excluded_rows[k].end(), i) == sys.excluded_rows[k].end())
                keep.push_back(i);
        }
        const Eigen::MatrixXd h = dd.h_pos(keep, Eigen::all);
        const Eigen::MatrixXd rinv = Eigen::MatrixXd(dd.r_dd(keep, keep)).inverse();
        const Eigen::Matrix3d wp = sys.prior_cov[k].inverse();
        const Eigen::Matrix3d n = wp + h.transpose() * rinv * h;
        const Eigen::Vector3d b = wp * (sys.prior_pos[k] - lin) + h.transpose() * rinv * y(keep);
        const Eigen::Vector3d expect = lin + n.ldlt().solve(b);
        EXPECT_LT((r.solution.epochs[k].pos - expect).norm(), 1e-5) << "epoch " << k;
    }
}

TEST(SolveGssm, CostNeverIncreases) {
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
        const Case s = prepare(noisy(seed, 40));
        const GssmSystem sys = build_gssm(s.sim.session, s.fwd, s.arcs);
        for (int iters : {1, 5}) {
            const GssmResult r = solve_gssm(s.sim.session, sys, iters, 1e-4);
            EXPECT_LE(r.final_cost, r.initial_cost) << "seed " << seed;
        }
    }
}

TEST(SolveGssm, OneValuePerArcConstantSeries) {
    const Case s = prepare(noisy(4, 40));
    const GssmSystem sys = build_gssm(s.sim.session, s.fwd, s.arcs);
    const GssmResult r = solve_gssm(s.sim.session, sys);
    ASSERT_EQ(r.arc_values.size(), s.arcs.size());
    const auto series = arc_series(sys, r.arc_values);
    for (std::size_t a = 0; a < s.arcs.size(); ++a) {
        for (int k = s.arcs[a].start; k <= s.arcs[a].end; ++k) {
            bool seen = false;
            for (std::size_t i = 0; i < sys.row_arc[k].size(); ++i) {
                if (sys.row_arc[k][i] != static_cast<int>(a)) continue;
                EXPECT_EQ(series[k][i], r.arc_values[a]);
                seen = true;
            }
            EXPECT_TRUE(seen);
        }
    }
}

TEST(SolveGssm, JacobianMatchesFiniteDifference) {
    const Case s = prepare(noisy(5, 10));
    const GssmSystem sys = build_gssm(s.sim.session, s.fwd, s.arcs);
    const double h = 1.0;
    for (int k = 0; k < sys.n_epochs; ++k) {
        for (int axis = 0; axis < 3; ++axis) {
            auto shifted = [&](double step) {
                std::vector<Eigen::Vector3d> pos = sys.lin_pos;
                pos[k](axis) += step;
                return relinearize(s.sim.session, sys, pos, sys.lin_arc);
            };
            const GssmSystem plus = shifted(h), minus = shifted(-h);
            for (std::size_t f = 0; f < sys.factors.size(); ++f) {
                const Factor& fc = sys.factors[f];
                if (fc.kind != FactorKind::Measurement || fc.epoch != k) continue;
                // rhs is observed minus computed: d(rhs)/dx = -jac.
                const Eigen::VectorXd fd = -(plus.factors[f].rhs - minus.factors[f].rhs) / (2.0 * h);
                const Eigen::VectorXd an = fc.jac.col(axis);
                EXPECT_LE((fd - an).norm(), 1e-5 * an.norm()) << "epoch " << k << " axis " << axis;
            }
        }
    }
}

TEST(SolveGssm, EpochOrderDoesNotMatter) {
    const Case s = prepare(noisy(7, 30));
    const GssmSystem a = build_gssm(s.sim.session, s.fwd, s.arcs);
    GssmOptions opt;
    opt.epoch_order.resize(30);
    std::iota(opt.epoch_order.begin(), opt.epoch_order.end(), 0);
    std::shuffle(opt.epoch_order.begin(), opt.epoch_order.end(), std::mt19937_64(1));
    const GssmSystem b = build_gssm(s.sim.session, s.fwd, s.arcs, opt);
    EXPECT_NE(a.epoch_col, b.epoch_col);
    const Eigen::VectorXd da = solve_delta(a), db = solve_delta(b);
    for (int k = 0; k < 30; ++k) {
        EXPECT_LT((da.segment<3>(a.epoch_col[k]) - db.segment<3>(b.epoch_col[k])).norm(), 1e-10);
    }
    for (int i = 0; i < a.n_arcs; ++i) EXPECT_LT(std::abs(da(a.arc_col[i]) - db(b.arc_col[i])), 1e-10);
    const GssmResult ra = solve_gssm(s.sim.session, a), rb = solve_gssm(s.sim.session, b);
    for (int k = 0; k < 30; ++k) EXPECT_LT((ra.solution.epochs[k].pos - rb.solution.epochs[k].pos).norm(), 1e-8);
}

TEST(SolveGssm, ConvergesAndReportsIterations) {
    const Case s = prepare(noisy(8, 50));
    const GssmSystem sys = build_gssm(s.sim.session, s.fwd, s.arcs);
    const GssmResult r = solve_gssm(s.sim.session, sys);
    EXPECT_TRUE(r.converged);
    EXPECT_GE(r.iterations, 1);
    EXPECT_LE(r.iterations, 5);
    ASSERT_EQ(r.solution.epochs.size(), 50u);
    EXPECT_EQ(r.solution.method, "gssm");
    for (const auto& e : r.solution.epochs) EXPECT_FALSE(e.flagged);
}

TEST(BuildGssm, RandomWalkFactorIsOptional) {
    const Case s = prepare(noisy(10, 20));
    GssmOptions opt;
    opt.position_rw_psd = 1.0;
    const GssmSystem plain = build_gssm(s.sim.session, s.fwd, s.arcs);
    const GssmSystem rw = build_gssm(s.sim.session, s.fwd, s.arcs, opt);
    EXPECT_EQ(count_kind(plain, FactorKind::RandomWalk), 0);
    EXPECT_EQ(count_kind(rw, FactorKind::RandomWalk), 3 * 19);
    const GssmResult r = solve_gssm(s.sim.session, rw);
    EXPECT_LE(r.final_cost, r.initial_cost);
}

TEST(BuildGssm, MissingArcIsAssemblyError) {
    Case s = prepare(noisy(11, 12));
    s.arcs.pop_back();
    EXPECT_THROW(build_gssm(s.sim.session, s.fwd, s.arcs), AssemblyError);
}

TEST(BuildGssm, BadEpochOrderIsRejected) {
    const Case s = prepare(noisy(12, 6));
    GssmOptions opt;
    opt.epoch_order = {0, 1, 2, 3, 4, 4};
    EXPECT_THROW(build_gssm(s.sim.session, s.fwd, s.arcs, opt), AssemblyError);
}

TEST(ArcPrior, FixedFloatAndDiffuse) {
    GssmOptions opt;
    AmbiguityArc a;
    a.float_cycles = 3.2;
    a.variance = 0.01;
    EXPECT_EQ(arc_prior(a, opt), std::make_pair(3.2, 0.01));
    a.fixed = 3;
    EXPECT_EQ(arc_prior(a, opt), std::make_pair(3.0, 1e-8));
    AmbiguityArc none;
    EXPECT_EQ(arc_prior(none, opt).second, opt.unestimated_arc_variance);
}

TEST(SystemDump, MatrixMarketFiles) {
    const Case s = prepare(noisy(13, 5));
    const GssmSystem sys = build_gssm(s.sim.session, s.fwd, s.arcs);
    const auto dir = std::filesystem::temp_directory_path();
    write_system_dump(dir / "gssm_test_A.mtx", dir / "gssm_test_b.mtx", sys);
    std::ifstream a(dir / "gssm_test_A.mtx"), b(dir / "gssm_test_b.mtx");
    std::string la, lb;
    std::getline(a, la);
    std::getline(b, lb);
    EXPECT_EQ(la.rfind("%%MatrixMarket matrix coordinate real general", 0), 0u);
    EXPECT_EQ(lb.rfind("%%MatrixMarket matrix array real general", 0), 0u);
    std::getline(a, la);
    while (!la.empty() && la[0] == '%') std::getline(a, la);
    std::istringstream dims(la);
    int rows = 0, cols = 0;
    dims >> rows >> cols;
    EXPECT_EQ(rows, sys.rows());
    EXPECT_EQ(cols, sys.cols());
}
