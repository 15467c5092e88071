// Throughput of the batch solver and the simulated likelihood, parallel against the serial reference.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "../tests/test_support.hpp"
#include "refnut/data_io.hpp"
#include "refnut/estimation.hpp"
#include "refnut/solver.hpp"

using namespace refnut;

namespace {

const std::vector<HouseholdState>& states() {
    static std::vector<HouseholdState> s = [] {
        std::mt19937_64 eng(11);
        Theta th = Theta::published(0.5);
        std::vector<HouseholdState> v;
        for (int i = 0; i < 2000; ++i) v.push_back(refnut::testing::random_state(eng, th));
        return v;
    }();
    return s;
}

const LikelihoodData& likelihood_data() {
    static LikelihoodData d = [] {
        GeneratorSpec g;
        g.n_per_cell = 100;
        GenerationContext gc;
        gc.theta = Theta::published(0.5);
        gc.sigma_r = SigmaRPolicy::fixed(0.5);
        EstimationConfig ec;
        ec.m_draws = 10;
        ec.reference_source = ReferenceSource::Column;
        return prepare_likelihood(generate_panel(g, gc), ec, MonetaryScale{}, CovariateScaling{});
    }();
    return d;
}

void BM_solve_batch(benchmark::State& st) {
    Theta th = Theta::published(0.5);
    for (auto _ : st) benchmark::DoNotOptimize(solve_batch(states(), th, GridConfig{}));
    st.SetItemsProcessed(st.iterations() * static_cast<long>(states().size()));
}

void BM_solve_batch_serial(benchmark::State& st) {
    Theta th = Theta::published(0.5);
    for (auto _ : st) benchmark::DoNotOptimize(solve_batch_serial(states(), th, GridConfig{}));
    st.SetItemsProcessed(st.iterations() * static_cast<long>(states().size()));
}

void BM_log_likelihood(benchmark::State& st) {
    Theta th = Theta::published(0.5);
    GridConfig grid = EstimationConfig{}.grid;
    for (auto _ : st) benchmark::DoNotOptimize(log_likelihood(likelihood_data(), th, grid));
}

void BM_log_likelihood_serial(benchmark::State& st) {
    Theta th = Theta::published(0.5);
    GridConfig grid = EstimationConfig{}.grid;
    for (auto _ : st) benchmark::DoNotOptimize(log_likelihood_serial(likelihood_data(), th, grid));
}

}  // namespace

BENCHMARK(BM_solve_batch)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_solve_batch_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_log_likelihood)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_log_likelihood_serial)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
