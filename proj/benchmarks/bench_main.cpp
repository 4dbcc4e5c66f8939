#include <benchmark/benchmark.h>

#include <cmath>
#include <numbers>
#include <random>

#include "prune_ast/analysis.hpp"
#include "prune_ast/forward.hpp"
#include "prune_ast/frontend.hpp"
#include "prune_ast/tensor.hpp"
#include "prune_ast/weights.hpp"

using namespace prune_ast;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937& rng) {
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    Matrix m(r, c);
    for (float& v : m.data()) v = u(rng);
    return m;
}

PatchGrid random_grid(std::size_t n_time, std::mt19937& rng) {
    std::normal_distribution<float> nd;
    MelSpectrogram mel;
    mel.values = Matrix(n_time * kPatchSize, 128);
    for (float& v : mel.values.data()) v = nd(rng);
    mel.content_frames = mel.values.rows();
    return patchify(mel);
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    std::mt19937 rng(1);
    const Matrix a = random_matrix(n, 768, rng), b = random_matrix(768, 768, rng);
    for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * 768 * 768));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(512);

static void BM_Forward(benchmark::State& state) {
    const ModelConfig cfg;
    const VitWeights w = VitWeights::from_tensors(random_init(cfg, 1), cfg);
    std::mt19937 rng(2);
    const PatchGrid g = random_grid(64, rng);
    PruneConfig pc;
    pc.keep_rate = static_cast<double>(state.range(0)) / 10.0;
    for (auto _ : state) benchmark::DoNotOptimize(classify_forward(g, w, pc).logits);
}
BENCHMARK(BM_Forward)->Arg(10)->Arg(5)->Unit(benchmark::kMillisecond);

static void BM_KendallTau(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    std::mt19937 rng(3);
    std::vector<std::size_t> c(n);
    std::vector<float> a(n);
    for (std::size_t i = 0; i < n; ++i) {
        c[i] = 1 + rng() % 5;
        a[i] = static_cast<float>(rng() % 1000);
    }
    for (auto _ : state) benchmark::DoNotOptimize(kendall_tau_clustered(c, a));
}
BENCHMARK(BM_KendallTau)->Arg(512)->Arg(65536);

static void BM_LogMel(benchmark::State& state) {
    Waveform w;
    w.sample_rate = 16000;
    w.samples.resize(160000);
    for (std::size_t i = 0; i < w.samples.size(); ++i)
        w.samples[i] = static_cast<float>(0.3 * std::sin(2 * std::numbers::pi * 440.0 * i / 16000.0));
    const FrontendConfig fc;
    for (auto _ : state) benchmark::DoNotOptimize(compute_log_mel(w, fc));
}
BENCHMARK(BM_LogMel)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
