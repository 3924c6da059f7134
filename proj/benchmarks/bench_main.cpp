#include <benchmark/benchmark.h>

#include "subtune/costmodel.hpp"
#include "subtune/datakit.hpp"
#include "subtune/model.hpp"
#include "subtune/rng.hpp"
#include "subtune/train.hpp"

namespace {

using namespace subtune;

Tensor2 random_batch(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Rng rng(seed);
    Tensor2 x(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) x(i, j) = rng.normal();
    }
    return x;
}

void BM_Forward(benchmark::State& state) {
    const auto width = static_cast<std::size_t>(state.range(0));
    const BlockNetwork net = BlockNetwork::build(width, 8, 10, 1);
    const Tensor2 x = random_batch(64, width, 2);
    for (auto _ : state) benchmark::DoNotOptimize(forward(net.live(), x));
    state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_Forward)->Arg(16)->Arg(32)->Arg(64);

void BM_ForwardBackward(benchmark::State& state) {
    const auto width = static_cast<std::size_t>(state.range(0));
    const BlockNetwork net = BlockNetwork::build(width, 8, 10, 1);
    const Tensor2 x = random_batch(64, width, 2);
    std::vector<int> y(64);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 10);
    for (auto _ : state) {
        ForwardResult f = forward(net.live(), x);
        const LossResult l = loss_and_grad(f.logits, y);
        benchmark::DoNotOptimize(backward(net.live(), f.tape, l.dlogits));
    }
    state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_ForwardBackward)->Arg(16)->Arg(32)->Arg(64);

// One epoch of tuning a single block on 100 samples: the inner loop of every
// profile and greedy evaluation.
void BM_TrainEpochOneBlock(benchmark::State& state) {
    const BlockNetwork pretrained = BlockNetwork::build(32, 8, 10, 1);
    const Dataset data = gen_source_task(32, 10, 100, 2, 3);
    const SubsetSpec subset = block_window(pretrained, static_cast<std::size_t>(state.range(0)), 1);
    TrainConfig cfg;
    cfg.epochs = 1;
    for (auto _ : state) {
        BlockNetwork net = prepare_for_tuning(pretrained, subset, HeadKind::subtune, 4);
        benchmark::DoNotOptimize(train(net, data, cfg));
    }
}
BENCHMARK(BM_TrainEpochOneBlock)->Arg(1)->Arg(8);

CostProfile random_profile(std::size_t n) {
    Rng rng(5);
    CostProfile p;
    for (std::size_t i = 0; i < n; ++i) {
        p.c.push_back(rng.uniform(0.1, 10.0));
        p.s.push_back(rng.uniform(0.1, 10.0));
    }
    return p;
}

void BM_CostClosedForm(benchmark::State& state) {
    const CostProfile p = random_profile(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(sweep_ranges(p, 1));
}
BENCHMARK(BM_CostClosedForm)->Arg(12)->Arg(48);

void BM_CostSimulator(benchmark::State& state) {
    const CostProfile p = random_profile(static_cast<std::size_t>(state.range(0)));
    const TuneRange r{2, p.layers() / 2};
    for (auto _ : state) benchmark::DoNotOptimize(simulate_pipeline(p, r, true));
}
BENCHMARK(BM_CostSimulator)->Arg(12)->Arg(48);

}  // namespace
BENCHMARK_MAIN();
