#include <benchmark/benchmark.h>

#include "stoic/diffusion.hpp"
#include "stoic/train.hpp"

using namespace stoic;

namespace {

StoicConfig bench_config(StrideVariant sv, int l, int n, int img) {
    StoicConfig c;
    c.stride = sv;
    c.channels = 3;
    c.height = c.width = img;
    c.embed_dim = l;
    c.heads = StoicConfig::default_heads(l);
    c.num_blocks = n;
    c.decoder_conv = sv == StrideVariant::s1 ? DecoderConv::conv : DecoderConv::conv_transpose;
    return c;
}

void BM_CoreBlockStack(benchmark::State& state) {
    StoicConfig c = bench_config(StrideVariant::s2, static_cast<int>(state.range(0)),
                                 static_cast<int>(state.range(1)), 32);
    ParamStore params = build_params(c, 0);
    Rng rng(1);
    Tensor seq = Tensor::randn({1, c.seq_len(), c.embed_dim}, rng);
    NoGradGuard ng;
    for (auto _ : state) {
        Tensor out = run_block_stack(seq, params, c);
        benchmark::DoNotOptimize(out.impl());
    }
}
BENCHMARK(BM_CoreBlockStack)->Args({256, 12})->Unit(benchmark::kMillisecond);

void BM_CoreBlockStackStreaming(benchmark::State& state) {
    StoicConfig c = bench_config(StrideVariant::s2, static_cast<int>(state.range(0)),
                                 static_cast<int>(state.range(1)), 32);
    ParamStore params = build_params(c, 0);
    Rng rng(1);
    Tensor seq = Tensor::randn({1, c.seq_len(), c.embed_dim}, rng);
    for (auto _ : state) {
        Tensor out = run_block_stack_streaming(seq, params, c);
        benchmark::DoNotOptimize(out.impl());
    }
}
BENCHMARK(BM_CoreBlockStackStreaming)->Args({256, 12})->Unit(benchmark::kMillisecond);

void BM_StoicForward(benchmark::State& state) {
    StoicConfig c = bench_config(StrideVariant::s2, 64, 4, 8);
    c.channels = 1;
    c.heads = 4;
    ParamStore params = build_params(c, 0);
    Rng rng(2);
    int64_t batch = state.range(0);
    Tensor x = Tensor::randn({batch, 1, 8, 8}, rng);
    std::vector<int> t(static_cast<size_t>(batch), 100);
    NoGradGuard ng;
    for (auto _ : state) {
        Tensor out = stoic_forward(x, t, std::nullopt, params, c);
        benchmark::DoNotOptimize(out.impl());
    }
}
BENCHMARK(BM_StoicForward)->Arg(1)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
    StoicConfig c = bench_config(StrideVariant::s2, 64, 4, 8);
    c.channels = 1;
    c.heads = 4;
    NoiseSchedule sched = make_schedule(200, 1e-4, 0.1);
    ParamStore params = build_params(c, 0);
    params.set_requires_grad(true);
    AdamState st = AdamState::init_like(params);
    TrainHyper hyper;
    hyper.batch_size = 64;
    DenoiseFn net = make_denoiser(params, c);
    Rng rng(3);
    Tensor x0 = Tensor::randn({64, 1, 8, 8}, rng);
    Tensor eps = Tensor::randn({64, 1, 8, 8}, rng);
    std::vector<int> t(64);
    for (auto& tv : t) tv = static_cast<int>(rng.uniform_int(1, sched.T));
    int64_t step = 0;
    for (auto _ : state) {
        params.zero_grads();
        Tensor loss = ddpm_loss(net, x0, t, eps, sched);
        backward(loss);
        adamw_step(params, st, hyper, ++step);
        benchmark::DoNotOptimize(loss.impl());
    }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_AncestralStep(benchmark::State& state) {
    NoiseSchedule sched = make_schedule(1000, 1e-4, 0.02);
    Rng rng(4);
    int64_t chains = state.range(0);
    Tensor x = Tensor::randn({chains, 1, 8, 8}, rng);
    Tensor eps = Tensor::randn(x.shape(), rng);
    Tensor noise = Tensor::randn(x.shape(), rng);
    NoGradGuard ng;
    for (auto _ : state) {
        Tensor out = ancestral_step(x, 500, eps, sched, noise);
        benchmark::DoNotOptimize(out.impl());
    }
}
BENCHMARK(BM_AncestralStep)->Arg(256)->Arg(4096)->Unit(benchmark::kMicrosecond);

}  // namespace
