#include <cmath>
#include <fstream>
#include <iostream>

#include <gtest/gtest.h>

#include "json.hpp"

#include "cmaae/error.hpp"
#include "cmaae/eval.hpp"
#include "cmaae/log.hpp"
#include "cmaae/synthetic.hpp"
#include "test_util.hpp"

using namespace cmaae;
using namespace cmaae::test;

namespace {

Synthesizer copy_synth() {
    return [](const torch::Tensor& x, const torch::Tensor&) { return x.clone(); };
}

EvalModels copy_models(double max_age = 60) {
    EvalModels m;
    m.synthesize = copy_synth();
    m.max_age = max_age;
    return m;
}

Dataset as_real(Dataset ds) {
    ds.provenance = Provenance::RealFolder;
    return ds;
}

} // namespace

TEST(Sweep, LayoutSourcePlusAges) {
    Dataset ds = tiny_dataset(1, 1);
    SweepGrid g = synthesize_sweep(copy_synth(), {ds.items[0].image}, {0, 15, 30, 45, 60}, 60);
    ASSERT_EQ(g.cells.size(), 1u);
    EXPECT_EQ(g.cells[0].size() + 1, 6u);
    EXPECT_EQ(g.ages, (std::vector<double>{0, 15, 30, 45, 60}));
}

TEST(Sweep, AgesSortedAndNonGridAccepted) {
    Dataset ds = tiny_dataset(2, 1);
    std::vector<ImageTensor> src{ds.items[0].image, ds.items[1].image};
    SweepGrid g = synthesize_sweep(copy_synth(), src, {50, 37.5, 10}, 60);
    EXPECT_EQ(g.ages, (std::vector<double>{10, 37.5, 50}));
    ASSERT_EQ(g.cells.size(), 2u);
    for (const auto& row : g.cells)
        for (const auto& img : row) {
            EXPECT_TRUE(img.same_shape(src[0]));
            for (double v : img.values()) {
                EXPECT_GE(v, 0.0);
                EXPECT_LE(v, 1.0);
            }
        }
}

TEST(Sweep, AgeValidation) {
    Dataset ds = tiny_dataset(1, 1);
    EXPECT_THROW(synthesize_sweep(copy_synth(), {ds.items[0].image}, {}, 60), UserError);
    EXPECT_THROW(synthesize_sweep(copy_synth(), {ds.items[0].image}, {10, 61}, 60), UserError);
    EXPECT_THROW(synthesize_sweep(copy_synth(), {ds.items[0].image}, {-1}, 60), UserError);
}

TEST(Sweep, ConditionedByTargetAge) {
    // A synthesizer that paints the target age into the wrinkle rows: the
    // oracle reading of each cell recovers the requested age.
    SynthConfig cfg;
    Synthesizer paint = [&](const torch::Tensor& x, const torch::Tensor& ages) {
        auto out = x.clone();
        for (int64_t b = 0; b < x.size(0); ++b) {
            const float v = 0.9f - 0.6f * ages[b].item<float>();
            for (int r = 20; r < 27; r += 2) out.index_put_({b, torch::indexing::Slice(), r, torch::indexing::Slice(8, 24)}, v);
        }
        return out;
    };
    SweepGrid g = synthesize_sweep(paint, {render_face(cfg, 0, 5)}, {12.5, 40}, 60);
    EXPECT_NEAR(oracle_age(g.cells[0][0], 60), 12.5, 1e-4);
    EXPECT_NEAR(oracle_age(g.cells[0][1], 60), 40.0, 1e-4);
}

TEST(Sweep, WritesMontageAndSidecar) {
    TempDir dir;
    Dataset ds = tiny_dataset(2, 1);
    SweepGrid g = synthesize_sweep(copy_synth(), {ds.items[0].image, ds.items[1].image}, {10, 30, 50}, 60);
    g.source_names = {"a.png", "b.png"};
    write_sweep(g, dir / "sweep.png", dir / "sweep.json");
    Raw8Image png = read_png(dir / "sweep.png");
    EXPECT_EQ(png.width, 4 * 32 + 5 * 2);
    EXPECT_EQ(png.height, 2 * 32 + 3 * 2);
    std::ifstream in(dir / "sweep.json");
    auto j = nlohmann::json::parse(in);
    EXPECT_EQ(j["rows"], 2);
    EXPECT_EQ(j["cols"], 4);
    EXPECT_EQ(j["sources"][1], "b.png");
    EXPECT_EQ(j["cells"].size(), 8u);
    EXPECT_EQ(j["cells"][5]["x"], 2 + 1 * 34);
    EXPECT_EQ(j["cells"][5]["y"], 2 + 1 * 34);
}

TEST(AgingAccuracy, CopyGeneratorAtInputAgesIsZero) {
    Dataset ds = tiny_dataset(5, 4);
    EvalReport r = evaluate_aging_accuracy(copy_models(), ds, 3, true, 1, TargetAges::Input);
    ASSERT_TRUE(r.oracle_mae.has_value());
    EXPECT_NEAR(r.oracle_mae->mean, 0.0, 1e-5);
    EXPECT_NEAR(r.identity_oracle->mean, 0.0, 1e-6);
    EXPECT_EQ(r.n, 60u);
}

TEST(AgingAccuracy, OracleRequiresSyntheticData) {
    Dataset ds = as_real(tiny_dataset(2, 2));
    EXPECT_THROW(evaluate_aging_accuracy(copy_models(), ds, 2, true, 1), UserError);
}

TEST(AgingAccuracy, OracleNeverTouchesRegressor) {
    set_log_quiet(true);
    Dataset ds = tiny_dataset(3, 4);
    TrainState state(tiny_config());
    pretrain_regressor(state, ds);
    pretrain_encoder(state, ds);
    const auto digest = params_digest(*state.regressor);
    EvalReport r = evaluate_aging_accuracy(eval_models(state), ds, 2, true, 4);
    EXPECT_EQ(params_digest(*state.regressor), digest);
    EXPECT_TRUE(r.oracle_mae && r.regressor_mae && r.identity_latent && r.identity_oracle);
    EXPECT_GE(r.identity_latent->mean, 0.0);
    EXPECT_GE(r.identity_oracle->mean, 0.0);
    EXPECT_GE(r.oracle_mae->std, 0.0);
    EXPECT_EQ(r.oracle_mae->n, 24u);
}

TEST(AgingAccuracy, DeterministicGivenSeed) {
    set_log_quiet(true);
    Dataset ds = tiny_dataset(3, 4);
    TrainState state(tiny_config());
    pretrain_regressor(state, ds);
    pretrain_encoder(state, ds);
    auto a = evaluate_aging_accuracy(eval_models(state), ds, 2, true, 9).to_json();
    auto b = evaluate_aging_accuracy(eval_models(state), ds, 2, true, 9).to_json();
    auto c = evaluate_aging_accuracy(eval_models(state), ds, 2, true, 10).to_json();
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
    auto j = nlohmann::json::parse(a);
    for (const char* k : {"aging_mae_oracle_years", "aging_mae_regressor_years", "identity_distance_oracle",
                          "identity_distance_latent"}) {
        EXPECT_TRUE(j[k].contains("mean")) << k;
        EXPECT_TRUE(j[k].contains("std")) << k;
        EXPECT_TRUE(j[k].contains("n")) << k;
    }
}

TEST(AgingAccuracy, RegressorPathOnRealData) {
    set_log_quiet(true);
    Dataset ds = tiny_dataset(2, 4);
    TrainState state(tiny_config());
    pretrain_regressor(state, ds);
    pretrain_encoder(state, ds);
    EvalReport r = evaluate_aging_accuracy(eval_models(state), as_real(ds), 2, false, 1);
    EXPECT_FALSE(r.oracle_mae.has_value());
    ASSERT_TRUE(r.regressor_mae.has_value());
    EXPECT_EQ(r.regressor_mae->n, 16u);
}

TEST(Identity, CopyGeneratorIsZero) {
    Dataset ds = tiny_dataset(3, 3);
    Encoder e(tiny_spec());
    init_params(*e, NetworkKind::Encoder, 1);
    e->eval();
    EvalModels m = copy_models();
    m.identity_encoder = &e;
    IdentityStats s = evaluate_identity(m, ds, 2, 3);
    EXPECT_NEAR(s.latent.mean, 0.0, 1e-6);
    ASSERT_TRUE(s.oracle.has_value());
    EXPECT_NEAR(s.oracle->mean, 0.0, 1e-6);
    EXPECT_FALSE(evaluate_identity(m, as_real(ds), 2, 3).oracle.has_value());
}

TEST(Summarize, MeanStd) {
    Stat s = summarize({1, 2, 3, 4});
    EXPECT_DOUBLE_EQ(s.mean, 2.5);
    EXPECT_DOUBLE_EQ(s.std, std::sqrt(1.25));
    EXPECT_EQ(s.n, 4u);
}

TEST(Ablation, IdenticalArmsGiveIdenticalReports) {
    set_log_quiet(true);
    Dataset train_set = tiny_dataset(2, 8);
    SynthConfig held;
    held.n_identities = 2;
    held.images_per_identity = 2;
    held.first_identity = 50;
    Dataset test_set = gen_synthetic_dataset(held);
    TrainConfig cfg = tiny_config();
    cfg.epochs = 1;
    AblationOptions opts;
    opts.seeds = {0};
    opts.ages_per_item = 2;
    AblationResult r = run_ablation(cfg, train_set, test_set, {{"a", cfg.weights}, {"b", cfg.weights}}, opts);
    EXPECT_EQ(r.arm("a").per_seed.at(0).to_json(), r.arm("b").per_seed.at(0).to_json());
    EXPECT_THROW(r.arm("c"), UserError);
    EXPECT_EQ(r.arm("a").std_oracle_mae, 0.0);
    auto j = nlohmann::json::parse(r.to_json());
    EXPECT_TRUE(j["arms"][0].contains("std_oracle_mae_years_over_seeds"));
    EXPECT_DOUBLE_EQ(j["arms"][0]["mean_oracle_mae_years"].get<double>(),
                     r.arm("a").per_seed.at(0).oracle_mae->mean);
    EXPECT_THROW(run_ablation(cfg, train_set, as_real(test_set), {{"a", cfg.weights}}, opts), UserError);
}

TEST(Ablation, SummaryLine) {
    RAblation r;
    r.ratio = 2.5;
    r.pass = true;
    EXPECT_EQ(r.summary_line(), "ratio=2.500000 pass=true");
}

TEST(RandomInit, OracleMaeMatchesUninformedBaseline) {
    // An untrained generator carries no information about the target age, so
    // its error is that of an estimator independent of the target: for a
    // readout p and U ~ Uniform(0, A), E|U - p| = (p^2 + (A - p)^2) / (2A).
    // Averaged over 3 random initializations.
    set_log_quiet(true);
    SynthConfig sc;
    sc.n_identities = 30;
    sc.images_per_identity = 2;
    sc.seed = 8;
    Dataset ds = gen_synthetic_dataset(sc);
    for (std::uint64_t seed : {0, 1, 2}) {
        TrainConfig cfg = tiny_config(seed);
        TrainState state(cfg);
        Synthesizer synth = make_synthesizer(state);
        std::vector<double> readouts;
        EvalModels m;
        m.max_age = 60;
        m.synthesize = [&](const torch::Tensor& x, const torch::Tensor& ages) {
            auto out = synth(x, ages);
            for (const auto& img : from_batch(out)) readouts.push_back(oracle_age(img, 60));
            return out;
        };
        EvalReport r = evaluate_aging_accuracy(m, ds, 8, true, seed);
        double expected = 0;
        for (double p : readouts) expected += (p * p + (60 - p) * (60 - p)) / 120.0;
        expected /= readouts.size();
        const double se = r.oracle_mae->std / std::sqrt(static_cast<double>(r.oracle_mae->n));
        std::cout << "seed " << seed << ": oracle MAE " << r.oracle_mae->mean << " +- " << se
                  << ", uninformed expectation " << expected << ", constant-at-30 baseline 15\n";
        EXPECT_NEAR(r.oracle_mae->mean, expected, 4 * se);
        EXPECT_GE(r.oracle_mae->mean, 15.0 - 4 * se);
    }
}
