#include <gtest/gtest.h>

#include <random>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "rtkgssm/dd_engine.hpp"
#include "rtkgssm/errors.hpp"
#include "rtkgssm/sim.hpp"

using namespace rtkgssm;

namespace {

SatObs sat_with_elevation(const std::string& id, double el) {
    SatObs s;
    s.id = id;
    s.elevation_rad = el;
    s.pos_ecef = Eigen::Vector3d(2.2e7, 0, 0);
    s.band(Band::L1) = BandObs{1.0e8, 2.1e7, false};
    return s;
}

Simulation exact_sim(long long max_amb = 0, int sats = 6, std::vector<Band> bands = {Band::L1, Band::L2}) {
    Scenario sc;
    sc.seed = 5;
    sc.epochs = 3;
    sc.satellites = sats;
    sc.bands = std::move(bands);
    sc.noise_scale = 0.0;
    sc.max_ambiguity = static_cast<int>(max_amb);
    return generate(sc);
}

}  // namespace

TEST(SelectReference, HighestElevation) {
    std::vector<SatObs> s{sat_with_elevation("G01", 0.5), sat_with_elevation("G02", 1.2),
                          sat_with_elevation("G03", 0.9)};
    EXPECT_EQ(select_reference(s, s, Band::L1), "G02");
}

TEST(SelectReference, TieGoesToSmallerId) {
    std::vector<SatObs> s{sat_with_elevation("G02", 1.0), sat_with_elevation("G01", 1.0)};
    EXPECT_EQ(select_reference(s, s, Band::L1), "G01");
}

TEST(SelectReference, SingleCommonSatelliteThrows) {
    std::vector<SatObs> rover{sat_with_elevation("G01", 1.0), sat_with_elevation("G02", 0.5)};
    std::vector<SatObs> base{sat_with_elevation("G01", 1.0)};
    EXPECT_THROW(select_reference(rover, base, Band::L1), GeometryError);
}

TEST(SelectReference, IgnoresSatellitesWithoutTheBand) {
    std::vector<SatObs> s{sat_with_elevation("G01", 0.5), sat_with_elevation("G02", 1.2),
                          sat_with_elevation("G03", 0.9)};
    s[1].band(Band::L1).reset();
    EXPECT_EQ(select_reference(s, s, Band::L1), "G03");
}

TEST(DiffMatrix, Examples) {
    Eigen::MatrixXd d2(1, 2);
    d2 << 1, -1;
    EXPECT_EQ(diff_matrix(2), d2);
    Eigen::MatrixXd d4(3, 4);
    d4 << 1, -1, 0, 0, 1, 0, -1, 0, 1, 0, 0, -1;
    EXPECT_EQ(diff_matrix(4), d4);
    EXPECT_ANY_THROW(diff_matrix(1));
}

TEST(DiffMatrix, RowsHaveOnePlusOneMinus) {
    for (int m = 2; m < 12; ++m) {
        const Eigen::MatrixXd d = diff_matrix(m);
        ASSERT_EQ(d.rows(), m - 1);
        for (int i = 0; i < d.rows(); ++i) {
            EXPECT_EQ(d.row(i).sum(), 0.0);
            EXPECT_EQ((d.row(i).array() == 1.0).count(), 1);
            EXPECT_EQ((d.row(i).array() == -1.0).count(), 1);
        }
    }
}

TEST(LosMatrix, AxisAligned) {
    const std::vector<Eigen::Vector3d> sats{Eigen::Vector3d(0, 0, 2.0e7)};
    const Eigen::MatrixXd e = los_matrix(Eigen::Vector3d::Zero(), sats);
    EXPECT_NEAR((e.row(0) - Eigen::RowVector3d(0, 0, 1)).norm(), 0.0, 1e-15);
}

TEST(LosMatrix, UnitRowsOnRandomGeometry) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const Eigen::Vector3d rx(6.4e6 * g(rng), 6.4e6 * g(rng), 6.4e6 * g(rng));
        std::vector<Eigen::Vector3d> sats;
        for (int i = 0; i < 8; ++i) sats.emplace_back(2.6e7 * g(rng), 2.6e7 * g(rng), 2.6e7 * g(rng));
        const Eigen::MatrixXd e = los_matrix(rx, sats);
        for (int i = 0; i < e.rows(); ++i) EXPECT_NEAR(e.row(i).norm(), 1.0, 1e-12);
    }
}

TEST(LosMatrix, CoincidentThrows) {
    const std::vector<Eigen::Vector3d> sats{Eigen::Vector3d(1, 2, 3)};
    EXPECT_THROW(los_matrix(Eigen::Vector3d(1, 2, 3), sats), GeometryError);
}

TEST(BuildDdSystem, ZeroNoiseAtTruthGivesZeroResidual) {
    const Simulation sim = exact_sim(0);
    for (std::size_t k = 0; k < sim.session.epochs.size(); ++k) {
        const DdSystem dd = build_dd_system(sim.session.epochs[k], sim.truth[k].pos, sim.session.config);
        ASSERT_GT(dd.rows(), 0);
        // Raw ranges of ~2e7 m carry ~4e-9 m of double rounding each.
        EXPECT_LT(dd.y.cwiseAbs().maxCoeff(), 1e-8);
    }
}

TEST(BuildDdSystem, CarrierResidualIsWavelengthTimesIntegerDd) {
    const Simulation sim = exact_sim(40);
    for (std::size_t k = 0; k < sim.session.epochs.size(); ++k) {
        const DdSystem dd = build_dd_system(sim.session.epochs[k], sim.truth[k].pos, sim.session.config);
        for (const auto& cr : dd.carrier_rows) {
            const double expect =
                cr.wavelength * static_cast<double>(sim.dd_integer(static_cast<int>(k), cr.band, dd.ref_id(cr), dd.other_id(cr)));
            EXPECT_NEAR(dd.y(cr.row), expect, 1e-6);
        }
        for (int i = dd.carrier_count(); i < dd.rows(); ++i) EXPECT_LT(std::abs(dd.y(i)), 1e-8);
    }
}

TEST(BuildDdSystem, ThreeSatellitesOneBandLayout) {
    Simulation sim = exact_sim(0, 4, {Band::L1});
    ObservationEpoch ep = sim.session.epochs[0];
    ep.rover.pop_back();
    ep.base.pop_back();
    const DdSystem dd = build_dd_system(ep, sim.truth[0].pos, sim.session.config);
    ASSERT_EQ(dd.rows(), 4);
    ASSERT_EQ(dd.h_pos.rows(), 4);
    ASSERT_EQ(dd.h_pos.cols(), 3);
    const BandBlock& b = dd.blocks.at(0);
    const Eigen::MatrixXd de = -(b.diff * b.los);
    EXPECT_EQ(dd.h_pos.topRows(2), de);
    EXPECT_EQ(dd.h_pos.bottomRows(2), de);
    EXPECT_EQ(dd.carrier_count(), 2);
}

TEST(BuildDdSystem, CovarianceOfEqualVariancesIsHandProduct) {
    const Eigen::MatrixXd d = diff_matrix(3);
    const double s2 = 0.04;
    Eigen::Matrix2d expect;
    expect << 2, 1, 1, 2;
    EXPECT_LT((d * (s2 * Eigen::Matrix3d::Identity()) * d.transpose() - s2 * expect).norm(), 1e-15);
}

TEST(BuildDdSystem, StructuralInvariants) {
    Scenario sc;
    sc.seed = 21;
    sc.epochs = 20;
    sc.satellites = 9;
    sc.bands = {Band::L1, Band::L2, Band::L5};
    const Simulation sim = generate(sc);
    for (std::size_t k = 0; k < sim.session.epochs.size(); ++k) {
        const DdSystem dd = build_dd_system(sim.session.epochs[k], sim.truth[k].pos + Eigen::Vector3d(1, -2, 0.5),
                                            sim.session.config);
        int expected_rows = 0;
        for (const auto& b : dd.blocks) expected_rows += 2 * b.pairs();
        EXPECT_EQ(dd.rows(), expected_rows);
        EXPECT_LT((dd.r_dd - dd.r_dd.transpose()).norm(), 1e-15);
        Eigen::LLT<Eigen::MatrixXd> llt(dd.r_dd);
        EXPECT_EQ(llt.info(), Eigen::Success);
        // H_pos = -D E recomputed per block; R_dd = D R_sd D^T per block.
        for (const auto& b : dd.blocks) {
            for (int i = 0; i < b.los.rows(); ++i) EXPECT_NEAR(b.los.row(i).norm(), 1.0, 1e-12);
            const Eigen::MatrixXd de = -(b.diff * b.los);
            EXPECT_LT((dd.h_pos.middleRows(b.carrier_row, b.pairs()) - de).norm(), 1e-15);
            EXPECT_LT((dd.h_pos.middleRows(b.code_row, b.pairs()) - de).norm(), 1e-15);
            const Eigen::MatrixXd rc = b.diff * b.carrier_sd_var.asDiagonal() * b.diff.transpose();
            const Eigen::MatrixXd rp = b.diff * b.code_sd_var.asDiagonal() * b.diff.transpose();
            EXPECT_LT((dd.r_dd.block(b.carrier_row, b.carrier_row, b.pairs(), b.pairs()) - rc).norm(), 1e-15);
            EXPECT_LT((dd.r_dd.block(b.code_row, b.code_row, b.pairs(), b.pairs()) - rp).norm(), 1e-12);
        }
        // Carrier rows precede code rows and follow L1, L2, L5 order.
        for (std::size_t i = 1; i < dd.blocks.size(); ++i) {
            EXPECT_LT(band_index(dd.blocks[i - 1].band), band_index(dd.blocks[i].band));
            EXPECT_LT(dd.blocks[i].carrier_row, dd.blocks[0].code_row);
        }
    }
}

TEST(BuildDdSystem, FirstOrderResponseToShift) {
    Scenario sc;
    sc.seed = 8;
    sc.epochs = 5;
    sc.satellites = 8;
    const Simulation sim = generate(sc);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g(0.0, 1.0);
    for (std::size_t k = 0; k < sim.session.epochs.size(); ++k) {
        const Eigen::Vector3d lin = sim.truth[k].pos;
        Eigen::Vector3d delta(g(rng), g(rng), g(rng));
        delta *= 0.1 / delta.norm();
        const DdSystem a = build_dd_system(sim.session.epochs[k], lin, sim.session.config);
        const DdSystem b = build_dd_system(sim.session.epochs[k], lin + delta, sim.session.config);
        EXPECT_LE((b.y - a.y + a.h_pos * delta).norm(), 1e-6 * delta.norm());
    }
}

TEST(BuildDdSystem, NoCommonSatellitesThrows) {
    Simulation sim = exact_sim(0, 4, {Band::L1});
    ObservationEpoch ep = sim.session.epochs[0];
    ep.base.resize(1);
    EXPECT_THROW(build_dd_system(ep, sim.truth[0].pos, sim.session.config), GeometryError);
    EXPECT_TRUE(try_build_dd_system(ep, sim.truth[0].pos, sim.session.config).empty());
}

TEST(CodePositionFix, RecoversTruthOnExactData) {
    const Simulation sim = exact_sim(0, 8);
    const Eigen::Vector3d guess = sim.truth[0].pos + Eigen::Vector3d(40, -30, 20);
    const Eigen::Vector3d fix = code_position_fix(sim.session.epochs[0], guess, sim.session.config);
    EXPECT_LT((fix - sim.truth[0].pos).norm(), 1e-6);
}
