#include <random>

#include <benchmark/benchmark.h>

#include "hdi/ann/semsa.hpp"
#include "hdi/energy/energy.hpp"
#include "hdi/events/events.hpp"
#include "hdi/lif/lif.hpp"
#include "hdi/model/model.hpp"
#include "hdi/numcore/ops.hpp"

using namespace hdi;
using namespace hdi::numcore;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, Real lo = -1, Real hi = 1) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<Real> u(lo, hi);
    Tensor t(shape, 0.0);
    for (auto& v : t.mutable_data()) v = u(rng);
    return t;
}

void BM_Matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Tensor a = random_tensor({n, n}, 1), b = random_tensor({n, n}, 2);
    NoGradScope quiet;
    for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_SemsaWindows(benchmark::State& state) {
    const auto window = static_cast<std::size_t>(state.range(0));
    ParamStore store;
    std::mt19937_64 rng(3);
    ann::SemsaConfig cfg;
    cfg.dim = 32;
    cfg.heads = 2;
    cfg.window = window;
    ann::Semsa attn(store, "semsa", cfg, rng);
    const Tensor x = random_tensor({4, window * window, 32}, 4);
    NoGradScope quiet;
    for (auto _ : state) benchmark::DoNotOptimize(attn.forward(x, window));
}
BENCHMARK(BM_SemsaWindows)->Arg(4)->Arg(8);

void BM_LifSequence(benchmark::State& state) {
    const auto neurons = static_cast<std::size_t>(state.range(0));
    const Tensor x = random_tensor({4, neurons}, 5, 0, 2);
    NoGradScope quiet;
    for (auto _ : state) benchmark::DoNotOptimize(lif::lif_sequence(x, lif::LIFParams{}));
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 4 * neurons));
}
BENCHMARK(BM_LifSequence)->Arg(1 << 10)->Arg(1 << 14);

void BM_Voxelize(benchmark::State& state) {
    events::EventStream s;
    s.sensor = {64, 64};
    std::mt19937_64 rng(6);
    for (events::Timestamp t = 0; t < 50000; t += 5)
        s.events.push_back({t, static_cast<int>(rng() % 64), static_cast<int>(rng() % 64), rng() % 2 ? 1 : -1});
    for (auto _ : state) benchmark::DoNotOptimize(events::voxelize(s, {0, 50000}, 4));
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * s.events.size()));
}
BENCHMARK(BM_Voxelize);

void BM_ToyForward(benchmark::State& state) {
    const auto cfg = model::ModelConfig::toy();
    model::Model m(cfg);
    const Tensor frame = random_tensor({cfg.height, cfg.width, 3}, 7, 0, 1);
    const Tensor voxels = random_tensor({cfg.steps, cfg.height, cfg.width, 2}, 8, 0, 2);
    for (auto _ : state) benchmark::DoNotOptimize(model::predict(m, frame, voxels));
}
BENCHMARK(BM_ToyForward)->Unit(benchmark::kMillisecond);

void BM_PaperOpCount(benchmark::State& state) {
    const auto cfg = model::ModelConfig::paper();
    for (auto _ : state) benchmark::DoNotOptimize(energy::count_ops(cfg));
}
BENCHMARK(BM_PaperOpCount);

}  // namespace
BENCHMARK_MAIN();
