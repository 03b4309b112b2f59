#include <cmath>
#include <fstream>
#include <string>

#include <gtest/gtest.h>

#include "cmaae/checkpoint.hpp"
#include "cmaae/error.hpp"
#include "cmaae/log.hpp"
#include "cmaae/training.hpp"
#include "test_util.hpp"

using namespace cmaae;
using namespace cmaae::test;

namespace {

struct Quiet : ::testing::Environment {
    void SetUp() override { set_log_quiet(true); }
};
const auto* const kQuiet = ::testing::AddGlobalTestEnvironment(new Quiet);

std::vector<torch::Tensor> snapshot(const torch::nn::Module& m) {
    std::vector<torch::Tensor> out;
    for (const auto& p : m.parameters()) out.push_back(p.detach().clone());
    return out;
}

bool same_params(const std::vector<torch::Tensor>& a, const torch::nn::Module& m) {
    auto b = m.parameters();
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!torch::equal(a[i], b[i].detach())) return false;
    return true;
}

bool all_grads_zero(const torch::nn::Module& m) {
    for (const auto& p : m.parameters())
        if (p.grad().defined() && p.grad().abs().max().item<double>() != 0.0) return false;
    return true;
}

bool any_grad_nonzero(const torch::nn::Module& m) {
    for (const auto& p : m.parameters())
        if (p.grad().defined() && p.grad().abs().max().item<double>() > 0.0) return true;
    return false;
}

TrainState pretrained_state(const Dataset& ds, TrainConfig cfg = tiny_config()) {
    TrainState state(cfg);
    pretrain_regressor(state, ds);
    pretrain_encoder(state, ds);
    return state;
}

} // namespace

TEST(TrainConfig, ValidationRules) {
    TrainConfig cfg = tiny_config();
    cfg.epochs = 0;
    EXPECT_THROW(cfg.validate(), UserError);
    cfg = tiny_config();
    cfg.learning_rate = 0.0;  // zero learning rate is a legal no-op probe
    EXPECT_NO_THROW(cfg.validate());
    cfg.learning_rate = -1e-4;
    EXPECT_THROW(cfg.validate(), UserError);
    cfg = tiny_config();
    cfg.batch_size = 0;
    EXPECT_THROW(cfg.validate(), UserError);
    cfg = tiny_config();
    cfg.pretrain_encoder_epochs = -1;
    EXPECT_THROW(cfg.validate(), UserError);
}

TEST(TrainConfig, DefaultsAndDeskPreset) {
    TrainConfig d;
    EXPECT_EQ(d.learning_rate, 1e-4);
    EXPECT_EQ(d.weight_decay, 1e-5);
    EXPECT_EQ(d.batch_size, 100);
    EXPECT_EQ(d.epochs, 200);
    EXPECT_EQ(d.weights, LossWeights::morph());
    EXPECT_EQ(d.g_loss_variant, GanGeneratorLoss::Saturating);
    TrainConfig desk = TrainConfig::desk();
    EXPECT_EQ(desk.batch_size, 64);
    EXPECT_EQ(desk.epochs, 30);
    EXPECT_EQ(desk.image_size, 32);
    EXPECT_EQ(desk.network_spec().rank_count, 60);
}

TEST(Adam, WeightDecayOnlyOnWeights) {
    // Zero-gradient probe: with all gradients zero only the decay term moves a
    // parameter, so exactly the weight tensors (dim >= 2) may change.
    Discriminator d(tiny_spec());
    init_params(*d, NetworkKind::Discriminator, 1);
    {
        torch::NoGradGuard ng;
        for (auto& p : d->parameters())
            if (p.dim() == 1) p.uniform_(0.5, 1.5);
    }
    auto opt = make_adam({d.ptr().get()}, 1e-2, 0.1);
    auto before = snapshot(*d);
    auto buffers_before = params_digest(*d);
    for (auto& p : d->parameters()) p.mutable_grad() = torch::zeros_like(p);
    opt->step();
    auto after = d->named_parameters();
    std::size_t i = 0;
    for (const auto& p : after) {
        const bool changed = !torch::equal(before[i++], p.value().detach());
        if (p.value().dim() >= 2)
            EXPECT_TRUE(changed) << p.key();
        else
            EXPECT_FALSE(changed) << p.key();
    }
    (void)buffers_before;
    for (const auto& b : d->named_buffers())
        if (b.key().find("running_var") != std::string::npos) EXPECT_EQ(b.value().min().item<double>(), 1.0);
}

TEST(Adam, BetasAreStandard) {
    Encoder e(tiny_spec());
    auto opt = make_adam({e.ptr().get()}, 1e-4, 1e-5);
    for (auto& group : opt->param_groups()) {
        auto& o = static_cast<torch::optim::AdamOptions&>(group.options());
        EXPECT_EQ(std::get<0>(o.betas()), 0.9);
        EXPECT_EQ(std::get<1>(o.betas()), 0.999);
        EXPECT_EQ(o.lr(), 1e-4);
    }
}

TEST(ShuffledBatches, CoverAndDeterminism) {
    auto a = shuffled_batches(103, 10, 7, 0);
    auto b = shuffled_batches(103, 10, 7, 0);
    auto c = shuffled_batches(103, 10, 7, 1);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
    ASSERT_EQ(a.size(), 11u);
    EXPECT_EQ(a.back().size(), 3u);
    std::vector<int> seen(103, 0);
    for (const auto& batch : a)
        for (auto i : batch) ++seen[i];
    for (int s : seen) EXPECT_EQ(s, 1);
}

TEST(PhaseOrder, TrainStepBeforePretrainingIsContractError) {
    Dataset ds = tiny_dataset(2, 4);
    std::vector<double> ages;
    auto x = dataset_batch(ds, &ages);
    TrainState state(tiny_config());
    EXPECT_THROW(train_step(state, x, ages), ContractError);
    pretrain_regressor(state, ds);
    EXPECT_THROW(train_step(state, x, ages), ContractError);
    pretrain_encoder(state, ds);
    EXPECT_NO_THROW(train_step(state, x, ages));
}

TEST(PretrainRegressor, SmokeTenItems) {
    Dataset ds = tiny_dataset(2, 5);
    TrainConfig cfg = tiny_config();
    cfg.pretrain_regressor_epochs = 1;
    TrainState state(cfg);
    auto rep = pretrain_regressor(state, ds);
    ASSERT_TRUE(rep.mae.has_value());
    EXPECT_TRUE(std::isfinite(rep.mae->mae_mean));
    EXPECT_EQ(rep.epoch_losses.size(), 1u);
    EXPECT_TRUE(state.regressor_ready);
    for (const auto& p : state.regressor->parameters()) EXPECT_FALSE(p.requires_grad());
    EXPECT_FALSE(state.regressor->is_training());
}

TEST(PretrainEncoder, FrozenCopyMatchesAtCopyTime) {
    Dataset ds = tiny_dataset(2, 8);
    TrainState state(tiny_config());
    pretrain_regressor(state, ds);
    const auto e_before = params_digest(*state.encoder);
    auto rep = pretrain_encoder(state, ds);
    EXPECT_NE(params_digest(*state.encoder), e_before);
    EXPECT_EQ(params_digest(*state.encoder_pre), params_digest(*state.encoder));
    EXPECT_EQ(state.encoder_pre_digest, params_digest(*state.encoder_pre));
    EXPECT_TRUE(std::isfinite(rep.psnr_db));
    for (const auto& p : state.encoder->parameters()) EXPECT_TRUE(p.requires_grad());
}

TEST(PretrainEncoder, IdentityAuxHeadRuns) {
    Dataset ds = tiny_dataset(3, 4);
    TrainConfig cfg = tiny_config();
    cfg.identity_aux_weight = 0.5;
    TrainState state(cfg);
    auto rep = pretrain_encoder(state, ds);
    EXPECT_TRUE(std::isfinite(rep.epoch_losses.at(0)));
}

TEST(TrainStep, FreezeContractAfterPhase3) {
    Dataset ds = tiny_dataset(2, 8);
    TrainState state = pretrained_state(ds);
    std::vector<double> ages;
    auto x = dataset_batch(ds, &ages);
    const auto e_pre = params_digest(*state.encoder_pre);
    const auto r = params_digest(*state.regressor);
    const auto e = params_digest(*state.encoder);
    for (int i = 0; i < 3; ++i) train_step(state, x, ages);
    EXPECT_EQ(params_digest(*state.encoder_pre), e_pre);
    EXPECT_EQ(params_digest(*state.regressor), r);
    EXPECT_NE(params_digest(*state.encoder), e);
    EXPECT_TRUE(all_grads_zero(*state.regressor));
    EXPECT_TRUE(all_grads_zero(*state.encoder_pre));
    EXPECT_NO_THROW(state.check_frozen());
    EXPECT_EQ(state.iteration, 3);
}

TEST(TrainStep, ZeroLearningRateLeavesParamsUnchanged) {
    Dataset ds = tiny_dataset(2, 8);
    TrainState state = pretrained_state(ds);
    state.config.learning_rate = 0.0;
    state.reset_optimizers();
    std::vector<double> ages;
    auto x = dataset_batch(ds, &ages);
    auto e = snapshot(*state.encoder);
    auto g = snapshot(*state.generator);
    auto d = snapshot(*state.discriminator);
    LossReport rep = train_step(state, x, ages);
    EXPECT_TRUE(same_params(e, *state.encoder));
    EXPECT_TRUE(same_params(g, *state.generator));
    EXPECT_TRUE(same_params(d, *state.discriminator));
    for (double v : {rep.pixel, rep.identity, rep.gan_g, rep.regression, rep.total_g, rep.gan_d})
        EXPECT_TRUE(std::isfinite(v));
    EXPECT_GT(rep.gan_d, 0.0);
}

TEST(TrainStep, DeterministicFromSameState) {
    Dataset ds = tiny_dataset(2, 8);
    std::vector<double> ages;
    auto x = dataset_batch(ds, &ages);
    TrainState a = pretrained_state(ds);
    TrainState b = pretrained_state(ds);
    for (int i = 0; i < 2; ++i) {
        LossReport ra = train_step(a, x, ages);
        LossReport rb = train_step(b, x, ages);
        EXPECT_EQ(ra.csv_row(), rb.csv_row());
        EXPECT_EQ(ra.total_g, rb.total_g);
        EXPECT_EQ(ra.gan_d, rb.gan_d);
    }
    EXPECT_EQ(params_digest(*a.generator), params_digest(*b.generator));
}

TEST(TrainStep, ReportTotalIsWeightedSum) {
    Dataset ds = tiny_dataset(2, 8);
    TrainState state = pretrained_state(ds);
    std::vector<double> ages;
    auto x = dataset_batch(ds, &ages);
    LossReport r = train_step(state, x, ages);
    const auto& w = state.config.weights;
    EXPECT_EQ(r.total_g, w.pixel * r.pixel + w.identity * r.identity + w.gan * r.gan_g + w.regression * r.regression);
}

TEST(TrainStep, MismatchedAgesRejected) {
    Dataset ds = tiny_dataset(2, 4);
    TrainState state = pretrained_state(ds);
    std::vector<double> ages;
    auto x = dataset_batch(ds, &ages);
    ages.pop_back();
    EXPECT_THROW(train_step(state, x, ages), UserError);
}

TEST(TrainStep, NonFiniteLossNamesComponent) {
    Dataset ds = tiny_dataset(2, 4);
    TrainState state = pretrained_state(ds);
    std::vector<double> ages;
    auto x = dataset_batch(ds, &ages);
    {
        torch::NoGradGuard ng;
        state.generator->named_parameters()["fc.bias"].fill_(std::numeric_limits<float>::quiet_NaN());
    }
    try {
        train_step(state, x, ages);
        FAIL() << "expected divergence";
    } catch (const DivergenceError& e) {
        EXPECT_NE(std::string(e.what()).find("loss"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("gan_d"), std::string::npos);
    }
}

TEST(GradientFlow, Partitioning) {
    Dataset ds = tiny_dataset(2, 4);
    TrainState state = pretrained_state(ds);
    std::vector<double> ages;
    auto x = dataset_batch(ds, &ages);
    auto ell = torch::rand({x.size(0)});
    auto fake = state.generator->forward(state.encoder->forward(x), ell);

    for (auto* m : std::initializer_list<torch::nn::Module*>{state.encoder.ptr().get(), state.generator.ptr().get(),
                                                              state.discriminator.ptr().get()})
        for (auto& p : m->parameters()) p.mutable_grad() = torch::Tensor();

    discriminator_objective(state.discriminator, x, ell, fake, ell).backward();
    EXPECT_TRUE(any_grad_nonzero(*state.discriminator));
    EXPECT_TRUE(all_grads_zero(*state.encoder));
    EXPECT_TRUE(all_grads_zero(*state.generator));

    for (auto& p : state.discriminator->parameters()) p.mutable_grad() = torch::Tensor();
    GeneratorTerms terms{pixel_loss(x, fake, torch::tensor(ages).to(torch::kFloat32), ell * 60),
                         identity_loss(state.encoder_pre, x, fake),
                         gan_g_loss(state.discriminator, fake, ell, GanGeneratorLoss::Saturating),
                         regression_loss(state.regressor, fake, ell)};
    generator_objective(LossWeights::morph(), terms).first.backward();
    EXPECT_TRUE(any_grad_nonzero(*state.encoder));
    EXPECT_TRUE(any_grad_nonzero(*state.generator));
    EXPECT_TRUE(all_grads_zero(*state.discriminator));
    EXPECT_TRUE(all_grads_zero(*state.regressor));
    EXPECT_TRUE(all_grads_zero(*state.encoder_pre));
}

TEST(Train, WritesLogAndCheckpoints) {
    TempDir dir;
    Dataset ds = tiny_dataset(2, 8);
    TrainConfig cfg = tiny_config();
    cfg.epochs = 2;
    cfg.checkpoint_every = 1;
    TrainState state(cfg);
    TrainOptions opts;
    opts.out_dir = dir.path();
    TrainResult res = train(state, ds, opts);
    EXPECT_TRUE(res.regressor_report.has_value());
    EXPECT_TRUE(res.encoder_report.has_value());
    ASSERT_EQ(res.epochs.size(), 2u);
    EXPECT_TRUE(std::filesystem::exists(dir / "checkpoints/epoch_0001/manifest.json"));
    EXPECT_TRUE(std::filesystem::exists(dir / "checkpoints/epoch_0002/manifest.json"));
    EXPECT_TRUE(std::filesystem::exists(dir / "final/manifest.json"));
    std::ifstream log(dir / "train_log.csv");
    std::string header;
    std::getline(log, header);
    EXPECT_EQ(header, "iteration,pixel,identity,gan_g,regression,total_g,gan_d,wall_seconds");
    int rows = 0;
    for (std::string line; std::getline(log, line);) ++rows;
    EXPECT_EQ(rows, 2);  // 16 items, batch 16, 2 epochs
}

TEST(Train, RejectsMismatchedDataset) {
    Dataset ds = tiny_dataset(2, 4);
    TrainConfig cfg = tiny_config();
    cfg.max_age = 80;
    TrainState state(cfg);
    EXPECT_THROW(train(state, ds), UserError);
}

TEST(Train, AutoencoderDegenerationMonotone) {
    // With only the pixel term and targets pinned to the input age, phase 3
    // is plain autoencoding: epoch-mean reconstruction error decreases.
    Dataset ds = tiny_dataset(8, 8);
    TrainConfig cfg = tiny_config();
    cfg.weights = {1.0, 0.0, 0.0, 0.0};
    cfg.target_equals_input = true;
    cfg.epochs = 6;
    cfg.pretrain_encoder_epochs = 2;
    cfg.learning_rate = 5e-4;
    TrainState state(cfg);
    TrainResult res = train(state, ds);
    ASSERT_EQ(res.epochs.size(), 6u);
    for (std::size_t i = 1; i < res.epochs.size(); ++i)
        EXPECT_LT(res.epochs[i].mean.pixel, res.epochs[i - 1].mean.pixel) << "epoch " << i + 1;
}

TEST(Train, ResumeContinuesWithoutDiscontinuity) {
    Dataset ds = tiny_dataset(4, 8);
    TrainConfig cfg = tiny_config(5);
    cfg.epochs = 6;
    cfg.checkpoint_every = 0;

    TrainState straight(cfg);
    TrainResult full = train(straight, ds);

    TempDir dir;
    TrainState first(cfg);
    TrainOptions part;
    part.max_epochs_this_run = 3;
    TrainResult head = train(first, ds, part);
    ASSERT_EQ(head.epochs.size(), 3u);
    save_checkpoint(first, dir / "mid");
    TrainState resumed = load_checkpoint(dir / "mid");
    EXPECT_EQ(resumed.epoch, 3);
    TrainResult tail = train(resumed, ds);
    ASSERT_EQ(tail.epochs.size(), 3u);
    EXPECT_FALSE(tail.regressor_report.has_value());
    EXPECT_FALSE(tail.encoder_report.has_value());

    std::vector<double> curve;
    for (const auto& e : head.epochs) curve.push_back(e.mean.total_g);
    for (const auto& e : tail.epochs) curve.push_back(e.mean.total_g);
    double running = 0;
    for (int i = 0; i < 3; ++i) running += curve[i] / 3.0;
    for (std::size_t i = 0; i < curve.size(); ++i)
        EXPECT_LE(std::abs(curve[i] - full.epochs[i].mean.total_g), 0.1 * std::abs(running)) << "epoch " << i + 1;
    // The resume is in fact exact.
    for (std::size_t i = 0; i < curve.size(); ++i) EXPECT_EQ(curve[i], full.epochs[i].mean.total_g);
    EXPECT_EQ(params_digest(*resumed.generator), params_digest(*straight.generator));
}

TEST(CloneState, IndependentCopy) {
    Dataset ds = tiny_dataset(2, 4);
    TrainState state = pretrained_state(ds);
    TrainState copy = clone_state(state);
    EXPECT_EQ(params_digest(*copy.generator), params_digest(*state.generator));
    EXPECT_EQ(params_digest(*copy.regressor), params_digest(*state.regressor));
    EXPECT_TRUE(copy.regressor_ready && copy.encoder_ready);
    std::vector<double> ages;
    auto x = dataset_batch(ds, &ages);
    train_step(copy, x, ages);
    EXPECT_NE(params_digest(*copy.generator), params_digest(*state.generator));
    EXPECT_NO_THROW(copy.check_frozen());
}
