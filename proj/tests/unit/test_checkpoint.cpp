#include <filesystem>

#include <gtest/gtest.h>

#include "json.hpp"

#include "cmaae/checkpoint.hpp"
#include "cmaae/error.hpp"
#include "cmaae/log.hpp"
#include "test_util.hpp"

using namespace cmaae;
using namespace cmaae::test;

TEST(Checkpoint, RoundTripBitwiseEvalOutputs) {
    set_log_quiet(true);
    TempDir dir;
    Dataset ds = tiny_dataset(2, 8);
    TrainConfig cfg = tiny_config(3);
    cfg.weights = {0.3, 0.7, 1.1, 0.05};
    TrainState state(cfg);
    train(state, ds);
    save_checkpoint(state, dir / "ck", {{"psnr", 21.5}});
    TrainState back = load_checkpoint(dir / "ck");

    auto z = torch::rand({4, cfg.latent_dim});
    auto ell = torch::tensor({0.0f, 0.25f, 0.6f, 1.0f});
    state.generator->eval();
    back.generator->eval();
    EXPECT_TRUE(bitwise_equal(state.generator->forward(z, ell), back.generator->forward(z, ell)));

    auto x = dataset_batch(ds);
    for (auto* s : {&state, &back}) {
        s->encoder->eval();
        s->discriminator->eval();
    }
    EXPECT_TRUE(bitwise_equal(state.encoder->forward(x), back.encoder->forward(x)));
    EXPECT_TRUE(bitwise_equal(state.discriminator->forward(x, ell.repeat({4})),
                              back.discriminator->forward(x, ell.repeat({4}))));
    EXPECT_TRUE(bitwise_equal(state.regressor->forward(x), back.regressor->forward(x)));
    EXPECT_TRUE(bitwise_equal(state.encoder_pre->forward(x), back.encoder_pre->forward(x)));

    EXPECT_EQ(back.epoch, state.epoch);
    EXPECT_EQ(back.iteration, state.iteration);
    EXPECT_EQ(back.config.weights, cfg.weights);
    EXPECT_TRUE(back.regressor_ready && back.encoder_ready);
    EXPECT_EQ(back.rng, state.rng);
    EXPECT_NO_THROW(back.check_frozen());
    EXPECT_FALSE(std::filesystem::exists(dir / "ck.tmp"));
    EXPECT_DOUBLE_EQ(read_metrics(dir / "ck").at("psnr"), 21.5);
}

TEST(Checkpoint, ManifestIsReadableAndCarriesWeights) {
    TempDir dir;
    TrainConfig cfg = tiny_config();
    cfg.weights = LossWeights::utkface();
    TrainState state(cfg);
    save_checkpoint(state, dir / "ck");
    auto j = nlohmann::json::parse(read_manifest(dir / "ck"));
    EXPECT_EQ(j["loss_weights"]["pixel"].get<double>(), 0.5);
    EXPECT_EQ(j["loss_weights"]["identity"].get<double>(), 1.0);
    EXPECT_EQ(j["loss_weights"]["gan"].get<double>(), 1.0);
    EXPECT_EQ(j["loss_weights"]["regression"].get<double>(), 0.01);
    EXPECT_EQ(j["spec"]["image_size"], 32);
    EXPECT_TRUE(j.contains("metrics_digest"));
    for (const char* f : {"E.bin", "G.bin", "D.bin", "E_pre.bin", "R.bin"})
        EXPECT_TRUE(std::filesystem::exists(dir.path() / "ck" / f)) << f;
}

TEST(Checkpoint, FingerprintMismatchOnLoad) {
    TempDir dir;
    TrainConfig cfg = tiny_config();
    TrainState state(cfg);
    save_checkpoint(state, dir / "ck");
    NetworkSpec other = cfg.network_spec();
    other.image_size = 64;
    try {
        load_checkpoint(dir / "ck", other);
        FAIL() << "expected a fingerprint error";
    } catch (const UserError& e) {
        EXPECT_NE(std::string(e.what()).find("fingerprint"), std::string::npos);
    }
    EXPECT_NO_THROW(load_checkpoint(dir / "ck", cfg.network_spec()));
}

TEST(Checkpoint, TamperedBlobRejected) {
    TempDir dir;
    TrainConfig cfg = tiny_config();
    TrainState state(cfg);
    save_checkpoint(state, dir / "a");
    TrainConfig wide = cfg;
    wide.latent_dim = 9;
    TrainState other(wide);
    save_checkpoint(other, dir / "b");
    std::filesystem::copy_file(dir.path() / "b" / "G.bin", dir.path() / "a" / "G.bin",
                               std::filesystem::copy_options::overwrite_existing);
    EXPECT_THROW(load_checkpoint(dir / "a"), UserError);
}

TEST(Checkpoint, MissingDirectoryIsUserError) {
    TempDir dir;
    EXPECT_THROW(load_checkpoint(dir / "nothing"), UserError);
}

TEST(Checkpoint, OverwriteKeepsLatest) {
    TempDir dir;
    TrainState s1(tiny_config(1));
    TrainState s2(tiny_config(2));
    save_checkpoint(s1, dir / "ck");
    save_checkpoint(s2, dir / "ck");
    TrainState back = load_checkpoint(dir / "ck");
    EXPECT_EQ(params_digest(*back.generator), params_digest(*s2.generator));
}
