#include <benchmark/benchmark.h>

#include <vector>

#include "eigendrift/asymptotics.hpp"
#include "eigendrift/eigen.hpp"
#include "eigendrift/stream.hpp"

using namespace eigendrift;

namespace {

ProblemSpec well_1d(double D) {
    ProblemSpec p;
    p.D = D;
    p.alpha = 1.0;
    p.drift = Drift::from_potential(parse("(x-0.5)^2"), 1);
    p.V = parse("0");
    p.bc = {BoundaryCondition::dirichlet(), BoundaryCondition::dirichlet()};
    return p;
}

void BM_SymTridiag(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Grid1D g = Grid1D::uniform(0.0, 1.0, n);
    const ProblemSpec p = well_1d(1e-2);
    for (auto _ : state) benchmark::DoNotOptimize(solve(p, g, FormPolicy::Symmetrized).lambda);
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_SymTridiag)->RangeMultiplier(4)->Range(256, 16384)->Complexity();

void BM_FittedDirect(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Grid1D g = Grid1D::uniform(0.0, 1.0, n);
    const ProblemSpec p = well_1d(1e-2);
    for (auto _ : state) benchmark::DoNotOptimize(solve(p, g, FormPolicy::Direct).lambda);
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_FittedDirect)->RangeMultiplier(4)->Range(256, 16384)->Complexity();

void BM_Sparse2D(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    ProblemSpec p;
    p.domain.dimension = 2;
    p.D = 0.1;
    p.alpha = 1.0;
    p.drift = Drift::from_potential(parse("(x-0.5)^2+(y-0.5)^2"), 2);
    p.V = parse("0");
    p.bc.assign(4, BoundaryCondition::dirichlet());
    const Grid2D g(Grid1D::uniform(0.0, 1.0, n), Grid1D::uniform(0.0, 1.0, n));
    for (auto _ : state) benchmark::DoNotOptimize(solve(p, g, FormPolicy::Symmetrized).lambda);
}
BENCHMARK(BM_Sparse2D)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_Sweep(benchmark::State& state) {
    const ProblemSpec p = well_1d(1e-2);
    const std::vector<double> Ds = {1e-1, 3e-2, 1e-2, 3e-3, 1e-3};
    for (auto _ : state) benchmark::DoNotOptimize(sweep(p, Ds).rows.size());
}
BENCHMARK(BM_Sweep)->Unit(benchmark::kMillisecond);

void BM_Simulate(benchmark::State& state) {
    StreamSpec s;
    s.q = parse("1");
    s.r = parse("1");
    s.downstream = Downstream::H;
    s.D = 1e-2;
    const Grid1D g = Grid1D::uniform(0.0, 1.0, static_cast<std::size_t>(state.range(0)));
    const std::vector<double> u0(g.size(), 0.1);
    for (auto _ : state) benchmark::DoNotOptimize(simulate(s, g, u0, 1.0, 0.01).final_max);
}
BENCHMARK(BM_Simulate)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
