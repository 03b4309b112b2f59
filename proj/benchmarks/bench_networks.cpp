#include <vector>

#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "cmaae/log.hpp"
#include "cmaae/networks.hpp"
#include "cmaae/synthetic.hpp"
#include "cmaae/training.hpp"

using namespace cmaae;

namespace {

TrainConfig bench_config(int base_filters) {
    TrainConfig cfg = TrainConfig::desk();
    cfg.base_filters = base_filters;
    cfg.seed = 1;
    return cfg;
}

void BM_EncoderForward(benchmark::State& st) {
    NetworkSpec spec;
    spec.base_filters = static_cast<int>(st.range(0));
    Encoder e(spec);
    e->eval();
    torch::NoGradGuard ng;
    auto x = torch::rand({64, 3, 32, 32});
    for (auto _ : st) benchmark::DoNotOptimize(e->forward(x));
}
BENCHMARK(BM_EncoderForward)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_GeneratorForward(benchmark::State& st) {
    NetworkSpec spec;
    spec.base_filters = static_cast<int>(st.range(0));
    Generator g(spec, true);
    g->eval();
    torch::NoGradGuard ng;
    auto z = torch::rand({64, spec.latent_dim});
    auto age = torch::rand({64});
    for (auto _ : st) benchmark::DoNotOptimize(g->forward(z, age));
}
BENCHMARK(BM_GeneratorForward)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& st) {
    set_log_quiet(true);
    TrainConfig cfg = bench_config(static_cast<int>(st.range(0)));
    cfg.pretrain_regressor_epochs = 0;
    cfg.pretrain_encoder_epochs = 0;
    SynthConfig sc;
    sc.n_identities = 8;
    sc.images_per_identity = 8;
    Dataset ds = gen_synthetic_dataset(sc);
    TrainState state(cfg);
    pretrain_regressor(state, ds);
    pretrain_encoder(state, ds);

    std::vector<const ImageTensor*> ptrs;
    std::vector<double> ages;
    for (const auto& it : ds.items) {
        ptrs.push_back(&it.image);
        ages.push_back(it.age.years);
    }
    auto x = to_batch(ptrs);
    for (auto _ : st) benchmark::DoNotOptimize(train_step(state, x, ages));
}
BENCHMARK(BM_TrainStep)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond)->MinTime(2.0);

} // namespace

BENCHMARK_MAIN();
