// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "realism/annotation.hpp"
#include "realism/correlation.hpp"
#include "realism/dataset.hpp"
#include "realism/geometry.hpp"
#include "realism/model.hpp"
#include "realism/random.hpp"

using namespace realism;

namespace {

PointCloud random_cloud(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    PointCloud pc;
    for (std::size_t i = 0; i < n; ++i) pc.points.push_back({rng.normal(), rng.normal(), rng.normal()});
    return pc;
}

ScorePairs random_pairs(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    ScorePairs p;
    for (std::size_t i = 0; i < n; ++i) {
        p.predictions.push_back(rng.uniform());
        p.labels.push_back(rng.uniform());
    }
    return p;
}

}  // namespace

static void BM_FarthestPointSample(benchmark::State& state) {
    const auto pc = random_cloud(static_cast<std::size_t>(state.range(0)), 1);
    for (auto _ : state) benchmark::DoNotOptimize(farthest_point_indices(pc, 512, 0));
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_FarthestPointSample)->RangeMultiplier(4)->Range(1024, 65536)->Complexity(benchmark::oN);

static void BM_Srocc(benchmark::State& state) {
    const auto p = random_pairs(static_cast<std::size_t>(state.range(0)), 2);
    for (auto _ : state) benchmark::DoNotOptimize(srocc(p));
}
BENCHMARK(BM_Srocc)->RangeMultiplier(8)->Range(16, 8192);

static void BM_Krocc(benchmark::State& state) {
    const auto p = random_pairs(static_cast<std::size_t>(state.range(0)), 3);
    for (auto _ : state) benchmark::DoNotOptimize(krocc(p));
}
BENCHMARK(BM_Krocc)->RangeMultiplier(8)->Range(16, 8192);

static void BM_ScoreMesh(benchmark::State& state) {
    const ModelConfig cfg;  // library defaults
    const auto model = init_model(cfg, 0);
    const auto mesh = primitive_mesh("torus", 32);
    for (auto _ : state) benchmark::DoNotOptimize(score_mesh(mesh, model));
}
BENCHMARK(BM_ScoreMesh)->Unit(benchmark::kMillisecond);

static void BM_SwissSession(benchmark::State& state) {
    const auto m = static_cast<std::size_t>(state.range(0));
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < m; ++i) ids.push_back("m" + std::to_string(i));
    std::uint64_t seed = 0;
    for (auto _ : state) {
        auto s = create_session("o", ids, ++seed);
        Rng rng(seed);
        while (!s.complete()) {
            for (const auto& p : next_pairings(s).pairs) record_choice(s, p.a, p.b, rng.uniform() < 0.5 ? p.a : p.b);
        }
        benchmark::DoNotOptimize(session_scores(s));
    }
}
BENCHMARK(BM_SwissSession)->Arg(4)->Arg(9)->Arg(16)->Arg(64);
BENCHMARK_MAIN();
