#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "rtkgssm/ambiguity.hpp"
#include "rtkgssm/errors.hpp"
#include "rtkgssm/kalman.hpp"
#include "rtkgssm/pipeline.hpp"
#include "rtkgssm/sim.hpp"

using namespace rtkgssm;

namespace {

Scenario ten_epochs() {
    Scenario sc;
    sc.seed = 17;
    sc.epochs = 10;
    sc.satellites = 6;
    sc.static_sky = true;
    return sc;
}

std::vector<AmbiguityArc> arcs_of(const Session& s) { return track_arcs(s.epochs, layout_systems(s)); }

AmbiguityArc float_arc(double value, double sigma) {
    AmbiguityArc a;
    a.float_cycles = value;
    a.variance = sigma * sigma;
    return a;
}

}  // namespace

TEST(TrackArcs, NoSlipsOneArcPerPair) {
    const Session s = generate(ten_epochs()).session;
    const auto arcs = arcs_of(s);
    // 6 satellites, 2 bands: 5 pairs per band.
    ASSERT_EQ(arcs.size(), 10u);
    for (const auto& a : arcs) {
        EXPECT_EQ(a.start, 0);
        EXPECT_EQ(a.end, 9);
        EXPECT_EQ(a.ref, "G01");
    }
}

TEST(TrackArcs, LockLossSplitsPairsOfThatSatellite) {
    Scenario sc = ten_epochs();
    sc.slips = {{5, "G03", std::nullopt}};
    const Session s = generate(sc).session;
    const auto arcs = arcs_of(s);
    ASSERT_EQ(arcs.size(), 12u);
    for (const auto& a : arcs) {
        if (a.other == "G03") {
            EXPECT_TRUE((a.start == 0 && a.end == 4) || (a.start == 5 && a.end == 9));
        } else {
            EXPECT_EQ(a.start, 0);
            EXPECT_EQ(a.end, 9);
        }
    }
}

TEST(TrackArcs, ReferenceChangeRestartsBand) {
    Session s = generate(ten_epochs()).session;
    // Lift G04 above G01 from epoch 7 on: it becomes the reference.
    for (int k = 7; k < 10; ++k) {
        for (auto& r : s.epochs[k].rover) {
            if (r.id == "G04") r.elevation_rad = 1.56;
        }
    }
    const auto arcs = arcs_of(s);
    ASSERT_EQ(arcs.size(), 20u);
    for (const auto& a : arcs) {
        if (a.start == 0) {
            EXPECT_EQ(a.end, 6);
            EXPECT_EQ(a.ref, "G01");
        } else {
            EXPECT_EQ(a.start, 7);
            EXPECT_EQ(a.end, 9);
            EXPECT_EQ(a.ref, "G04");
        }
    }
}

TEST(TrackArcs, GapStartsNewArc) {
    Session s = generate(ten_epochs()).session;
    for (int k = 3; k <= 4; ++k) {
        std::erase_if(s.epochs[k].rover, [](const SatObs& o) { return o.id == "G05"; });
    }
    const auto arcs = arcs_of(s);
    int g05 = 0;
    for (const auto& a : arcs) {
        if (a.other != "G05") continue;
        ++g05;
        EXPECT_TRUE((a.start == 0 && a.end == 2) || (a.start == 5 && a.end == 9));
    }
    EXPECT_EQ(g05, 4);
}

TEST(TrackArcs, PartitionAndDeterminism) {
    Scenario sc;
    sc.seed = 4;
    sc.epochs = 200;
    sc.satellites = 9;
    sc.slips = {{40, "G04", std::nullopt}, {90, "", Band::L2}, {150, "G07", Band::L1}};
    const Session s = generate(sc).session;
    const auto dds = layout_systems(s);
    const auto arcs = track_arcs(s.epochs, dds);
    const auto again = track_arcs(s.epochs, dds);
    ASSERT_EQ(arcs.size(), again.size());
    for (std::size_t i = 0; i < arcs.size(); ++i) {
        EXPECT_EQ(arcs[i].id, again[i].id);
        EXPECT_EQ(arcs[i].start, again[i].start);
        EXPECT_EQ(arcs[i].end, again[i].end);
        EXPECT_EQ(arcs[i].other, again[i].other);
        EXPECT_GE(arcs[i].end, arcs[i].start);
    }
    for (std::size_t k = 0; k < dds.size(); ++k) {
        for (const auto& cr : dds[k].carrier_rows) {
            int covering = 0;
            for (const auto& a : arcs) {
                covering += a.band == cr.band && a.ref == dds[k].ref_id(cr) && a.other == dds[k].other_id(cr) &&
                            a.covers(static_cast<int>(k));
            }
            EXPECT_EQ(covering, 1) << "epoch " << k;
        }
    }
    const RowArcMap rows = map_rows_to_arcs(arcs, dds);
    ASSERT_EQ(rows.size(), dds.size());
    for (std::size_t k = 0; k < dds.size(); ++k) EXPECT_EQ(rows[k].size(), dds[k].carrier_rows.size());
}

TEST(TrackArcs, MissingCoverageIsAssemblyError) {
    const Session s = generate(ten_epochs()).session;
    const auto dds = layout_systems(s);
    auto arcs = track_arcs(s.epochs, dds);
    arcs[3].end = 4;
    try {
        map_rows_to_arcs(arcs, dds);
        FAIL() << "expected an assembly error";
    } catch (const AssemblyError& e) {
        EXPECT_NE(std::string(e.what()).find("epoch 5"), std::string::npos) << e.what();
    }
}

TEST(TryFix, NearIntegerIsFixed) {
    const AmbiguityArc a = try_fix(float_arc(5.02, 0.05), 3.0);
    ASSERT_TRUE(a.is_fixed());
    EXPECT_EQ(*a.fixed, 5);
    EXPECT_EQ(a.value(), 5.0);
}

TEST(TryFix, HalfCycleStaysFloat) { EXPECT_FALSE(try_fix(float_arc(5.5, 0.05), 3.0).is_fixed()); }

TEST(TryFix, InfiniteThresholdStaysFloat) {
    EXPECT_FALSE(try_fix(float_arc(5.02, 0.05), std::numeric_limits<double>::infinity()).is_fixed());
}

TEST(TryFix, NegativeValuesRoundCorrectly) {
    const AmbiguityArc a = try_fix(float_arc(-12.97, 0.04), 3.0);
    ASSERT_TRUE(a.is_fixed());
    EXPECT_EQ(*a.fixed, -13);
}

TEST(TryFix, UncertainFloatStaysFloat) {
    EXPECT_FALSE(try_fix(float_arc(5.02, 1.0), 3.0).is_fixed());
    EXPECT_FALSE(try_fix(float_arc(5.02, 0.0), 3.0).is_fixed());
}

TEST(TryFix, FixedValueWithinFourSigma) {
    for (double f = -3.0; f <= 3.0; f += 0.013) {
        for (double sigma : {0.01, 0.05, 0.1, 0.15}) {
            const AmbiguityArc a = try_fix(float_arc(f, sigma), 3.0);
            if (!a.is_fixed()) continue;
            EXPECT_LE(std::abs(static_cast<double>(*a.fixed) - f), 4.0 * sigma);
            EXPECT_LE(std::abs(static_cast<double>(*a.fixed) - f), 0.25);
        }
    }
}

TEST(ArcEstimates, ZeroNoiseConvergesToIntegers) {
    Scenario sc;
    sc.seed = 31;
    sc.epochs = 12;
    sc.satellites = 8;
    sc.noise_scale = 0.0;
    const Simulation sim = generate(sc);
    const auto arcs0 = arcs_of(sim.session);
    const FilterTrajectory fwd = run_forward(sim.session, arcs0);
    std::vector<AmbiguityArc> arcs = arcs0;
    apply_arc_estimates(fwd, arcs);
    for (const auto& a : arcs) {
        ASSERT_GT(a.variance, 0.0);
        EXPECT_NEAR(a.float_cycles, static_cast<double>(sim.dd_integer(a.end, a.band, a.ref, a.other)), 0.1)
            << band_name(a.band) << " " << a.ref << "-" << a.other;
    }
}

TEST(FixedEpochs, RequiresAllRowsFixed) {
    const Session s = generate(ten_epochs()).session;
    const auto dds = layout_systems(s);
    auto arcs = track_arcs(s.epochs, dds);
    const RowArcMap rows = map_rows_to_arcs(arcs, dds);
    for (auto& a : arcs) a.fixed = 0;
    for (bool f : fixed_epochs(arcs, rows)) EXPECT_TRUE(f);
    arcs[0].fixed.reset();
    for (bool f : fixed_epochs(arcs, rows)) EXPECT_FALSE(f);
}

TEST(ArcsCsv, HeaderAndRows) {
    const Session s = generate(ten_epochs()).session;
    auto arcs = arcs_of(s);
    arcs[0].fixed = 7;
    const auto path = std::filesystem::temp_directory_path() / "rtkgssm_arcs_test.csv";
    write_arcs_csv(path, arcs);
    std::ifstream in(path);
    std::string header, first;
    std::getline(in, header);
    std::getline(in, first);
    EXPECT_EQ(header, "arc_id,band,ref,other,start,end,float,fixed");
    EXPECT_NE(first.find(",7"), std::string::npos);
    int n = 1;
    for (std::string line; std::getline(in, line);) ++n;
    EXPECT_EQ(n, static_cast<int>(arcs.size()));
}
