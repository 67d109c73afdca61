#include <benchmark/benchmark.h>

#include "mslir/cost.hpp"
#include "mslir/networks.hpp"
#include "mslir/simulation.hpp"

using namespace mslir;

namespace {

GridSpec square(std::int64_t n) { return GridSpec::centered({n, n}, {256.0 / n, 256.0 / n}); }

void BM_RayForward(benchmark::State& st) {
    const GridSpec grid = square(st.range(0));
    const RayTransform op(grid, make_fan_geometry(grid, st.range(0)));
    const auto f = make_phantom({}, grid, 1);
    std::vector<float> g(static_cast<std::size_t>(op.data_size()));
    for (auto _ : st) {
        op.forward<float>(f, g);
        benchmark::DoNotOptimize(g.data());
    }
    st.counters["samples/s"] = benchmark::Counter(static_cast<double>(op.cost()), benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_RayForward)->Arg(64)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_RayAdjoint(benchmark::State& st) {
    const GridSpec grid = square(st.range(0));
    const RayTransform op(grid, make_fan_geometry(grid, st.range(0)));
    const auto f = make_phantom({}, grid, 1);
    const auto g = op.forward<float>(f);
    std::vector<float> out(f.size());
    for (auto _ : st) {
        op.adjoint<float>(g, out);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_RayAdjoint)->Arg(64)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_Fbp(benchmark::State& st) {
    const GridSpec grid = square(st.range(0));
    const auto geom = make_fan_geometry(grid, st.range(0));
    const FilteredBackprojection fbp(grid, geom, {});
    const auto g = RayTransform(grid, geom).forward<float>(make_phantom({}, grid, 1));
    for (auto _ : st) benchmark::DoNotOptimize(fbp.apply<float>(g));
}
BENCHMARK(BM_Fbp)->Arg(64)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_ConvBlock(benchmark::State& st) {
    const std::int64_t n = st.range(0);
    ParamStore<float> ps(1);
    Graph<float> g(&ps);
    const Var x = g.input({1, 2, n, n}, "x");
    const Var t = g.input({1, 1, n, n}, "t");
    const Var loss = g.squared_distance(update_network(g, "blk", x, BlockConfig{}), t);
    g.set_input(x, std::vector<float>(static_cast<std::size_t>(2 * n * n), 0.5f));
    g.set_input(t, std::vector<float>(static_cast<std::size_t>(n * n), 0.1f));
    g.set_training(true);
    for (auto _ : st) {
        ps.zero_grad();
        g.forward();
        g.backward(loss);
    }
}
BENCHMARK(BM_ConvBlock)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_TrainingStep(benchmark::State& st) {
    const auto kind = static_cast<SchemeKind>(st.range(0));
    const GridSpec grid = square(128);
    const auto geom = make_fan_geometry(grid, 128);
    const Scheme s(SchemeConfig::defaults(kind), grid, geom);
    ParamStore<float> ps(1);
    auto sg = s.build<float>(&ps, LossMode::end_to_end);
    const auto f = make_phantom({}, grid, 2);
    sg.graph->set_input(sg.data, RayTransform(grid, geom).forward<float>(f));
    sg.graph->set_input(sg.truth, f);
    for (auto _ : st) {
        ps.zero_grad();
        sg.graph->forward();
        sg.graph->backward(sg.loss);
    }
    st.SetLabel(std::string(to_string(kind)));
}
BENCHMARK(BM_TrainingStep)
    ->Arg(static_cast<int>(SchemeKind::lgs))
    ->Arg(static_cast<int>(SchemeKind::ms_lgs))
    ->Arg(static_cast<int>(SchemeKind::ms_lfgs))
    ->Arg(static_cast<int>(SchemeKind::dunet))
    ->Arg(static_cast<int>(SchemeKind::unet_post))
    ->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
