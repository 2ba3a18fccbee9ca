#include <benchmark/benchmark.h>

#include <vector>

#include "lbridge/adamw.hpp"
#include "lbridge/kernels.hpp"
#include "lbridge/rng.hpp"
#include "lbridge/tape.hpp"
#include "lbridge/toy_model.hpp"
#include "lbridge/translator.hpp"

namespace {

using namespace lbridge;

Tensor random_tensor(Rng& rng, std::vector<int64_t> shape) {
    Tensor t(std::move(shape));
    for (float& v : t.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    return t;
}

void bm_matmul_64(benchmark::State& state) {
    Rng rng(11);
    const Tensor a = random_tensor(rng, {64, 64});
    const Tensor b = random_tensor(rng, {64, 64});
    for (auto _ : state) {
        Tensor c = kernels::matmul(a, b);
        benchmark::DoNotOptimize(c.data.data());
    }
}
BENCHMARK(bm_matmul_64);

void bm_toy_forward(benchmark::State& state) {
    ToyModelConfig cfg;
    cfg.seed = 5;
    const ToyModel model = init_model(cfg);
    std::vector<int> tokens;
    Rng rng(17);
    for (int i = 0; i < 48; ++i) tokens.push_back(static_cast<int>(rng.below(128)));
    for (auto _ : state) {
        ForwardResult fr = forward_states(model, tokens);
        benchmark::DoNotOptimize(fr.logits.data.data());
    }
}
BENCHMARK(bm_toy_forward);

void bm_generate_step(benchmark::State& state) {
    ToyModelConfig cfg;
    cfg.seed = 5;
    const ToyModel model = init_model(cfg);
    std::vector<int> prompt;
    Rng rng(19);
    for (int i = 0; i < 32; ++i) prompt.push_back(static_cast<int>(rng.below(128)));
    for (auto _ : state) {
        GenerateResult gr = generate(model, prompt, 1, 0.0f, 1);
        benchmark::DoNotOptimize(gr.tokens.data());
    }
}
BENCHMARK(bm_generate_step);

void bm_translate(benchmark::State& state) {
    TranslatorConfig cfg;
    cfg.d_src = 64;
    cfg.d_tgt = 64;
    cfg.seed = 9;
    const TranslatorParams params = init_translator(cfg);
    Rng rng(23);
    const Tensor x = random_tensor(rng, {64});
    for (auto _ : state) {
        Tensor y = translate(params, x);
        benchmark::DoNotOptimize(y.data.data());
    }
}
BENCHMARK(bm_translate);

void bm_translate_backward(benchmark::State& state) {
    TranslatorConfig cfg;
    cfg.d_src = 64;
    cfg.d_tgt = 64;
    cfg.seed = 9;
    const TranslatorParams params = init_translator(cfg);
    Rng rng(29);
    const Tensor x = random_tensor(rng, {8, 64});
    const Tensor y = random_tensor(rng, {8, 64});
    for (auto _ : state) {
        Tape tape;
        TranslatorVars vars = stage_translator(tape, params);
        const VarId out = translate_on_tape(tape, params.config, vars, tape.leaf(x, false));
        const VarId loss = tape.mse(out, tape.leaf(y, false));
        tape.backward(loss);
        benchmark::DoNotOptimize(tape.grad(vars.leaves.begin()->second).data());
    }
}
BENCHMARK(bm_translate_backward);

void bm_adamw_step(benchmark::State& state) {
    TranslatorConfig cfg;
    cfg.d_src = 64;
    cfg.d_tgt = 64;
    cfg.seed = 9;
    TranslatorParams params = init_translator(cfg);
    GradMap grads;
    Rng rng(31);
    for (const auto& [name, t] : params.params) {
        std::vector<float> g(t.data.size());
        for (float& v : g) v = static_cast<float>(rng.uniform(-0.01, 0.01));
        grads[name] = std::move(g);
    }
    AdamWState opt;
    AdamWConfig ocfg;
    for (auto _ : state) {
        adamw_step(params.params, grads, opt, ocfg);
        benchmark::DoNotOptimize(params.params.begin()->second.data.data());
    }
}
BENCHMARK(bm_adamw_step);

}  // namespace

BENCHMARK_MAIN();
