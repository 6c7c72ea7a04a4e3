// OpenMP kernels against their serial references. Thread count follows
// OMP_NUM_THREADS.

#include <numeric>

#include <benchmark/benchmark.h>

#include "asdn/classify.hpp"
#include "asdn/synthetic.hpp"

using namespace asdn;

namespace {

const synthetic::SubspaceProblem& problem() {
    static const synthetic::SubspaceProblem p = [] {
        synthetic::SubspaceConfig cfg;
        cfg.classes = 6;
        cfg.bands = 100;
        cfg.atoms_per_class = 20;
        cfg.train_per_class = 100;
        cfg.test_per_class = 200;
        cfg.noise = 0.05;
        return synthetic::make_subspace_problem(cfg);
    }();
    return p;
}

void classify(benchmark::State& state, bool parallel, const SolverSpec& spec) {
    const auto& p = problem();
    const GramCache cache(p.dict);
    (void)cache.factor(1.0);
    for (auto _ : state) {
        auto pred = parallel ? classify_testset(cache, p.test_pixels, spec)
                             : classify_testset_serial(cache, p.test_pixels, spec);
        benchmark::DoNotOptimize(pred.data());
    }
    state.SetItemsProcessed(state.iterations() * p.test_pixels.cols());
}

void gradient(benchmark::State& state, bool parallel) {
    const auto& p = problem();
    const GramCache cache(p.dict);
    const NetParams params = NetParams::defaults(static_cast<int>(state.range(0)));
    std::vector<std::size_t> batch(p.train_labels.size());
    std::iota(batch.begin(), batch.end(), 0);
    for (auto _ : state) {
        ParamGrads g = parallel ? batch_gradient(cache, p.train_pixels, p.train_labels, batch, params)
                                : batch_gradient_serial(cache, p.train_pixels, p.train_labels, batch, params);
        benchmark::DoNotOptimize(g.loss_value);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch.size()));
}

}  // namespace

BENCHMARK_CAPTURE(classify, omp_serial, false, SolverSpec{OmpSpec{9}})->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(classify, omp_parallel, true, SolverSpec{OmpSpec{9}})->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(classify, asdn_serial, false, SolverSpec{NetworkSpec{}})->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(classify, asdn_parallel, true, SolverSpec{NetworkSpec{}})->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(gradient, serial, false)->Arg(5)->Arg(9)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(gradient, parallel, true)->Arg(5)->Arg(9)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
