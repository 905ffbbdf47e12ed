#include <benchmark/benchmark.h>

#include "rtkgssm/gssm.hpp"
#include "rtkgssm/kalman.hpp"
#include "rtkgssm/pipeline.hpp"
#include "rtkgssm/sim.hpp"
#include "rtkgssm/sparse_lsq.hpp"

namespace {

struct Prepared {
    rtkgssm::Simulation sim;
    rtkgssm::FilterTrajectory fwd;
    std::vector<rtkgssm::AmbiguityArc> arcs;
};

Prepared prepare(int epochs) {
    rtkgssm::Scenario sc;
    sc.seed = 7;
    sc.epochs = epochs;
    sc.satellites = 11;
    Prepared p{rtkgssm::generate(sc), {}, {}};
    const auto tracked = rtkgssm::track_arcs(p.sim.session.epochs, rtkgssm::layout_systems(p.sim.session));
    p.fwd = rtkgssm::run_forward(p.sim.session, tracked);
    p.arcs = rtkgssm::resolve_arcs(p.sim.session, p.fwd, tracked, {});
    return p;
}

void BM_ForwardFilter(benchmark::State& state) {
    const Prepared p = prepare(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(rtkgssm::run_forward(p.sim.session, p.arcs));
}
BENCHMARK(BM_ForwardFilter)->Arg(250)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_GssmBuild(benchmark::State& state) {
    const Prepared p = prepare(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(rtkgssm::build_gssm(p.sim.session, p.fwd, p.arcs));
}
BENCHMARK(BM_GssmBuild)->Arg(250)->Arg(1000)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_GssmSolve(benchmark::State& state) {
    const Prepared p = prepare(static_cast<int>(state.range(0)));
    const rtkgssm::GssmSystem sys = rtkgssm::build_gssm(p.sim.session, p.fwd, p.arcs);
    for (auto _ : state) benchmark::DoNotOptimize(rtkgssm::solve_gssm(p.sim.session, sys));
}
BENCHMARK(BM_GssmSolve)->Arg(250)->Arg(1000)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_NormalSolve(benchmark::State& state) {
    const Prepared p = prepare(static_cast<int>(state.range(0)));
    const rtkgssm::SparseLsq lsq = rtkgssm::build_gssm(p.sim.session, p.fwd, p.arcs).whitened();
    for (auto _ : state) benchmark::DoNotOptimize(rtkgssm::solve_normal(lsq));
}
BENCHMARK(BM_NormalSolve)->Arg(250)->Arg(2000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
