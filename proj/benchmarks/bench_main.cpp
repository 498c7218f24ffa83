#include <benchmark/benchmark.h>

#include "penguin/attention.hpp"
#include "penguin/bias.hpp"
#include "penguin/model.hpp"
#include "penguin/rng.hpp"

using namespace penguin;

namespace {

Tensor<float> random_input(long batch, long n, long d, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<float> v(static_cast<std::size_t>(batch * n * d));
    for (auto& x : v) x = static_cast<float>(rng.normal(0.0, 1.0));
    return Tensor<float>::from({batch, n, d}, std::move(v));
}

std::vector<Tensor<float>> bias_for(long heads, long n) {
    auto stack = assemble_bias_stack(heads, BiasRegime::Both, PeriodSet::from_raw({24, 168}, 8), n);
    const Mask mask = causal_mask(n, n);
    return make_head_bias_tensors<float>(stack, &mask);
}

}  // namespace

static void BM_AttentionForwardGQA(benchmark::State& state) {
    const long n = 42, d = 128, h = 12, g = state.range(0), batch = 32;
    Rng rng(1);
    auto params = AttentionParams<float>::init(d, h, g, rng, nullptr);
    auto bias = bias_for(h, n);
    Tensor<float> x = random_input(batch, n, d, 2);
    for (auto _ : state) {
        NoGradGuard ng;
        benchmark::DoNotOptimize(penguin_attention(x, params, bias));
    }
}
BENCHMARK(BM_AttentionForwardGQA)->Arg(3)->Arg(12);

static void BM_AttentionTrainStepGQA(benchmark::State& state) {
    const long n = 42, d = 128, h = 12, g = state.range(0), batch = 32;
    Rng rng(1);
    Tape<float> tape;
    auto params = AttentionParams<float>::init(d, h, g, rng, &tape);
    auto bias = bias_for(h, n);
    Tensor<float> x = random_input(batch, n, d, 2);
    for (auto _ : state) {
        for (auto* p : params.parameters()) p->zero_grad();
        Tensor<float> out = penguin_attention(x, params, bias);
        Tensor<float> loss = mean(mul(out, out));
        backward(loss);
        benchmark::DoNotOptimize(params.w_q.grad().data());
    }
}
BENCHMARK(BM_AttentionTrainStepGQA)->Arg(3)->Arg(12);

static void BM_AttentionTrainStepMHA(benchmark::State& state) {
    const long n = 42, d = 128, h = 12, batch = 32;
    Rng rng(1);
    Tape<float> tape;
    auto gqa = AttentionParams<float>::init(d, h, 3, rng, nullptr);
    auto params = MhaParams<float>::replicate_from(gqa, &tape);
    auto bias = bias_for(h, n);
    Tensor<float> x = random_input(batch, n, d, 2);
    for (auto _ : state) {
        for (auto* p : params.parameters()) p->zero_grad();
        Tensor<float> out = mha_reference(x, params, bias);
        Tensor<float> loss = mean(mul(out, out));
        backward(loss);
        benchmark::DoNotOptimize(params.w_q.grad().data());
    }
}
BENCHMARK(BM_AttentionTrainStepMHA);

static void BM_BiasStackAssembly(benchmark::State& state) {
    const PeriodSet ps = PeriodSet::from_raw({24, 168}, 8);
    for (auto _ : state)
        benchmark::DoNotOptimize(assemble_bias_stack(12, BiasRegime::Both, ps, state.range(0)));
}
BENCHMARK(BM_BiasStackAssembly)->Arg(42)->Arg(128);

static void BM_TriangularDistance(benchmark::State& state) {
    long acc = 0, d = 0;
    for (auto _ : state) {
        acc += triangular_distance(d, 21);
        d = (d + 7) % 10000;
    }
    benchmark::DoNotOptimize(acc);
}
BENCHMARK(BM_TriangularDistance);

static void BM_ForecasterForward(benchmark::State& state) {
    PenguinConfig cfg;
    cfg.lookback = 96;
    cfg.horizon = 24;
    cfg.channels = 1;
    cfg.patch_len = 16;
    cfg.stride = 8;
    cfg.d_model = 48;
    cfg.d_ff = 96;
    cfg.heads = 12;
    cfg.layers = 1;
    cfg.regime = BiasRegime::Both;
    cfg.periods = {24, 56};
    Forecaster<float> model(cfg, 1);
    Rng rng(5);
    std::vector<double> x(96);
    for (auto& v : x) v = rng.normal(0.0, 1.0);
    for (auto _ : state) benchmark::DoNotOptimize(model.predict(x.data()));
}
BENCHMARK(BM_ForecasterForward);

BENCHMARK_MAIN();
