#include <benchmark/benchmark.h>

#include <vector>

#include "stoic/kernels.hpp"
#include "stoic/rng.hpp"

using namespace stoic;

namespace {

std::vector<float> random_vec(size_t n, uint64_t seed) {
    Rng rng(seed);
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    return v;
}

// Training-shaped matmuls: rows = batch * tokens.
void BM_GemmNN(benchmark::State& state) {
    int64_t m = state.range(0), k = state.range(1), n = state.range(2);
    auto a = random_vec(static_cast<size_t>(m * k), 1);
    auto b = random_vec(static_cast<size_t>(k * n), 2);
    std::vector<float> c(static_cast<size_t>(m * n));
    for (auto _ : state) {
        kernels::gemm_nn(m, k, n, a.data(), b.data(), c.data(), false);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * m * k * n);
}
BENCHMARK(BM_GemmNN)->Args({1024, 64, 192})->Args({1024, 64, 256})->Args({256, 512, 512});

void BM_GemmTN(benchmark::State& state) {
    int64_t m = state.range(0), k = state.range(1), n = state.range(2);
    auto a = random_vec(static_cast<size_t>(k * m), 3);
    auto b = random_vec(static_cast<size_t>(k * n), 4);
    std::vector<float> c(static_cast<size_t>(m * n));
    for (auto _ : state) {
        kernels::gemm_tn(m, k, n, a.data(), b.data(), c.data(), false);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * m * k * n);
}
BENCHMARK(BM_GemmTN)->Args({64, 1024, 192})->Args({256, 1024, 64});

void BM_Conv2dStride2(benchmark::State& state) {
    kernels::ConvGeom g;
    g.batch = 16;
    g.c_in = 3;
    g.h_in = g.w_in = 32;
    g.c_out = state.range(0);
    g.kernel = 2;
    g.stride = 2;
    g.h_out = g.w_out = 16;
    auto x = random_vec(static_cast<size_t>(g.batch * g.c_in * g.h_in * g.w_in), 5);
    auto w = random_vec(static_cast<size_t>(g.c_out * g.c_in * 4), 6);
    auto b = random_vec(static_cast<size_t>(g.c_out), 7);
    std::vector<float> y(static_cast<size_t>(g.batch * g.c_out * g.h_out * g.w_out));
    for (auto _ : state) {
        kernels::conv2d_forward(g, x.data(), w.data(), b.data(), y.data());
        benchmark::DoNotOptimize(y.data());
    }
}
BENCHMARK(BM_Conv2dStride2)->Arg(64)->Arg(256);

void BM_LayerNorm(benchmark::State& state) {
    int64_t rows = 1024, n = state.range(0);
    auto x = random_vec(static_cast<size_t>(rows * n), 8);
    auto gamma = random_vec(static_cast<size_t>(n), 9);
    auto beta = random_vec(static_cast<size_t>(n), 10);
    std::vector<float> y(x.size()), mean(static_cast<size_t>(rows)), rstd(static_cast<size_t>(rows));
    for (auto _ : state) {
        kernels::layer_norm_forward(rows, n, x.data(), gamma.data(), beta.data(), 1e-5f, y.data(),
                                    mean.data(), rstd.data());
        benchmark::DoNotOptimize(y.data());
    }
}
BENCHMARK(BM_LayerNorm)->Arg(64)->Arg(512);

void BM_GeluForward(benchmark::State& state) {
    auto x = random_vec(static_cast<size_t>(state.range(0)), 11);
    std::vector<float> y(x.size());
    for (auto _ : state) {
        kernels::gelu_forward(static_cast<int64_t>(x.size()), x.data(), y.data());
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GeluForward)->Arg(1 << 14)->Arg(1 << 18);

void BM_MhaForward(benchmark::State& state) {
    int64_t batch = 16, tlen = state.range(0), dim = state.range(1), heads = dim / 64;
    if (heads < 1) heads = 1;
    auto x = random_vec(static_cast<size_t>(batch * tlen * dim), 12);
    auto wqkv = random_vec(static_cast<size_t>(dim * 3 * dim), 13);
    auto bqkv = random_vec(static_cast<size_t>(3 * dim), 14);
    auto wout = random_vec(static_cast<size_t>(dim * dim), 15);
    auto bout = random_vec(static_cast<size_t>(dim), 16);
    std::vector<float> y(x.size());
    kernels::MhaWorkspace<float> ws;
    for (auto _ : state) {
        kernels::mha_forward(batch, tlen, dim, heads, x.data(), wqkv.data(), bqkv.data(),
                             wout.data(), bout.data(), y.data(), ws);
        benchmark::DoNotOptimize(y.data());
    }
}
BENCHMARK(BM_MhaForward)->Args({16, 64})->Args({256, 256});

}  // namespace
