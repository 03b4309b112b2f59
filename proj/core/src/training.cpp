#include "cmaae/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

#include "cmaae/log.hpp"

#include "cmaae/checkpoint.hpp"
#include "cmaae/error.hpp"

namespace fs = std::filesystem;

namespace cmaae {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;

std::mt19937_64 seeded(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
    return std::mt19937_64(seq);
}

// Whole dataset as one float NCHW tensor plus ages in years.
struct DenseData {
    torch::Tensor images;
    std::vector<double> ages;
    std::vector<std::int64_t> identity_class;
    std::int64_t n_identities = 0;
};

DenseData densify(const Dataset& ds) {
    require(!ds.empty(), "training dataset is empty");
    DenseData d;
    std::vector<const ImageTensor*> ptrs;
    ptrs.reserve(ds.size());
    for (const auto& item : ds.items) ptrs.push_back(&item.image);
    d.images = to_batch(std::span<const ImageTensor* const>(ptrs));
    std::map<std::string, std::int64_t> ids;
    for (const auto& item : ds.items) {
        d.ages.push_back(item.age.years);
        auto [it, inserted] = ids.emplace(item.identity, static_cast<std::int64_t>(ids.size()));
        d.identity_class.push_back(it->second);
    }
    d.n_identities = static_cast<std::int64_t>(ids.size());
    return d;
}

torch::Tensor gather(const torch::Tensor& images, const std::vector<std::size_t>& idx) {
    std::vector<std::int64_t> as_i64(idx.begin(), idx.end());
    return images.index_select(0, torch::tensor(as_i64, torch::kInt64));
}

std::vector<double> pick(const std::vector<double>& values, const std::vector<std::size_t>& idx) {
    std::vector<double> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(values[i]);
    return out;
}

torch::Tensor as_tensor(std::span<const double> values) {
    return torch::tensor(std::vector<double>(values.begin(), values.end()), torch::kFloat64).to(torch::kFloat32);
}

double checked(const torch::Tensor& loss, const std::string& what) {
    const double v = loss.item<double>();
    if (!std::isfinite(v)) throw DivergenceError("non-finite " + what + " loss");
    return v;
}

double psnr_from_mse(double mse) {
    return 10.0 * std::log10(1.0 / std::max(mse, 1e-12));
}

// Optional identity-classification head used during encoder pre-training.
struct AuxHeadImpl : torch::nn::Module {
    AuxHeadImpl(int in, int classes) { head = register_module("head", torch::nn::Linear(in, classes)); }
    torch::Tensor forward(const torch::Tensor& z) { return head->forward(z); }
    torch::nn::Linear head{nullptr};
};
TORCH_MODULE(AuxHead);

} // namespace

TrainState::TrainState(const TrainConfig& cfg)
    : config(cfg),
      spec((cfg.validate(), cfg.network_spec())),
      encoder(spec),
      generator(spec, true),
      discriminator(spec),
      encoder_pre(spec),
      regressor(spec),
      rng(seeded(cfg.seed, 0x7a7e, 0)) {
    init_params(*encoder, NetworkKind::Encoder, config.seed);
    init_params(*generator, NetworkKind::Generator, config.seed);
    init_params(*discriminator, NetworkKind::Discriminator, config.seed);
    init_params(*regressor, NetworkKind::Regressor, config.seed);
    copy_params(*encoder, *encoder_pre);
    reset_optimizers();
}

void TrainState::reset_optimizers() {
    opt_generator = make_adam({encoder.ptr().get(), generator.ptr().get()}, config.learning_rate, config.weight_decay);
    opt_discriminator = make_adam({discriminator.ptr().get()}, config.learning_rate, config.weight_decay);
}

void TrainState::check_frozen() const {
    if (regressor_ready && params_digest(*regressor) != regressor_digest)
        throw ContractError("frozen regressor R changed after pre-training");
    if (encoder_ready && params_digest(*encoder_pre) != encoder_pre_digest)
        throw ContractError("frozen identity encoder E_pre changed after pre-training");
}

std::unique_ptr<torch::optim::Adam> make_adam(const std::vector<torch::nn::Module*>& modules, double learning_rate,
                                              double weight_decay) {
    std::vector<torch::Tensor> decay;
    std::vector<torch::Tensor> no_decay;
    for (auto* m : modules)
        for (auto& p : m->parameters()) (p.dim() >= 2 ? decay : no_decay).push_back(p);

    auto options = [&](double wd) {
        return std::make_unique<torch::optim::AdamOptions>(
            torch::optim::AdamOptions(learning_rate).betas({kBeta1, kBeta2}).weight_decay(wd));
    };
    std::vector<torch::optim::OptimizerParamGroup> groups;
    if (!decay.empty()) groups.emplace_back(decay, options(weight_decay));
    if (!no_decay.empty()) groups.emplace_back(no_decay, options(0.0));
    return std::make_unique<torch::optim::Adam>(
        std::move(groups), torch::optim::AdamOptions(learning_rate).betas({kBeta1, kBeta2}));
}

std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, int batch_size, std::uint64_t seed,
                                                       std::uint64_t epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    auto rng = seeded(seed, 0x5a0f, epoch);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch_size)
        batches.emplace_back(order.begin() + start, order.begin() + std::min(n, start + batch_size));
    return batches;
}

PretrainReport pretrain_regressor(TrainState& state, const Dataset& train, const Dataset* eval) {
    const TrainConfig& cfg = state.config;
    require(train.max_age == cfg.max_age, "dataset max_age differs from the configured max_age");
    DenseData data = densify(train);
    auto& r = state.regressor;
    set_requires_grad(*r, true);
    r->train();
    auto opt = make_adam({r.ptr().get()}, cfg.learning_rate, cfg.weight_decay);

    PretrainReport report;
    for (int epoch = 0; epoch < cfg.pretrain_regressor_epochs; ++epoch) {
        double sum = 0.0;
        std::size_t count = 0;
        for (const auto& idx : shuffled_batches(train.size(), cfg.batch_size, cfg.seed ^ 0x9e37, epoch)) {
            auto ages = pick(data.ages, idx);
            auto targets = rank_targets_tensor(ages, cfg.max_age, cfg.bin_width);
            auto loss = rank_loss(r->forward(gather(data.images, idx)), targets);
            const double v = loss.item<double>();
            if (!std::isfinite(v))
                throw DivergenceError("regressor pre-training: non-finite rank loss at epoch " + std::to_string(epoch));
            opt->zero_grad();
            loss.backward();
            opt->step();
            sum += v * idx.size();
            count += idx.size();
        }
        report.epoch_losses.push_back(sum / count);
        log_info("pretrain R epoch %d/%d rank_loss %.5f", epoch + 1, cfg.pretrain_regressor_epochs,
                     report.epoch_losses.back());
    }

    set_requires_grad(*r, false);
    r->eval();
    state.regressor_ready = true;
    state.regressor_digest = params_digest(*r);
    report.mae = evaluate_mae(r, eval ? *eval : train, cfg.bin_width, eval ? "eval" : "train");
    log_info("pretrain R done: MAE %.3f +- %.3f years", report.mae->mae_mean, report.mae->mae_std);
    return report;
}

PretrainReport pretrain_encoder(TrainState& state, const Dataset& train, const Dataset* eval) {
    const TrainConfig& cfg = state.config;
    DenseData data = densify(train);
    Generator decoder(state.spec, false);
    init_params(*decoder, NetworkKind::Decoder, cfg.seed);

    const bool use_aux = cfg.identity_aux_weight > 0.0 && data.n_identities > 1;
    AuxHead aux(state.spec.latent_dim, static_cast<int>(std::max<std::int64_t>(data.n_identities, 1)));
    init_params(*aux, NetworkKind::Decoder, cfg.seed + 1);

    auto& enc = state.encoder;
    enc->train();
    std::vector<torch::nn::Module*> trainable{enc.ptr().get(), decoder.ptr().get()};
    if (use_aux) trainable.push_back(aux.ptr().get());
    auto opt = make_adam(trainable, cfg.learning_rate, cfg.weight_decay);

    PretrainReport report;
    for (int epoch = 0; epoch < cfg.pretrain_encoder_epochs; ++epoch) {
        double sum = 0.0;
        std::size_t count = 0;
        for (const auto& idx : shuffled_batches(train.size(), cfg.batch_size, cfg.seed ^ 0x7f4a, epoch)) {
            auto x = gather(data.images, idx);
            auto z = enc->forward(x);
            auto loss = torch::mse_loss(decoder->forward(z), x);
            if (use_aux) {
                std::vector<std::int64_t> labels;
                for (auto i : idx) labels.push_back(data.identity_class[i]);
                loss = loss + cfg.identity_aux_weight *
                                  torch::cross_entropy_loss(aux->forward(z), torch::tensor(labels, torch::kInt64));
            }
            const double v = loss.item<double>();
            if (!std::isfinite(v))
                throw DivergenceError("encoder pre-training: non-finite reconstruction loss at epoch " +
                                      std::to_string(epoch));
            opt->zero_grad();
            loss.backward();
            opt->step();
            sum += v * idx.size();
            count += idx.size();
        }
        report.epoch_losses.push_back(sum / count);
        log_info("pretrain E epoch %d/%d loss %.6f", epoch + 1, cfg.pretrain_encoder_epochs,
                     report.epoch_losses.back());
    }

    copy_params(*enc, *state.encoder_pre);
    set_requires_grad(*state.encoder_pre, false);
    state.encoder_pre->eval();
    state.encoder_ready = true;
    state.encoder_pre_digest = params_digest(*state.encoder_pre);

    {
        torch::NoGradGuard no_grad;
        DenseData held = eval ? densify(*eval) : DenseData{};
        const auto& images = eval ? held.images : data.images;
        auto recon = decoder->forward(enc->forward(images));
        report.psnr_db = psnr_from_mse(torch::mse_loss(recon, images).item<double>());
    }
    log_info("pretrain E done: reconstruction PSNR %.2f dB", report.psnr_db);
    return report;
}

double reconstruction_psnr(TrainState& state, const Dataset& dataset) {
    torch::NoGradGuard no_grad;
    DenseData data = densify(dataset);
    std::vector<double> norm;
    for (double a : data.ages) norm.push_back(a / state.config.max_age);
    auto recon = state.generator->forward(state.encoder->forward(data.images), as_tensor(norm));
    return psnr_from_mse(torch::mse_loss(recon, data.images).item<double>());
}

LossReport train_step(TrainState& state, const torch::Tensor& x, std::span<const double> ages_years) {
    expect(state.regressor_ready && state.encoder_ready,
           "train_step requires both pre-training phases (R, then E) to have completed");
    const TrainConfig& cfg = state.config;
    const auto batch = x.size(0);
    require(static_cast<std::size_t>(batch) == ages_years.size(), "train_step: one age per image");

    // Target ages: uniform over [0, max_age] unless pinned to the input age.
    std::vector<double> target_years(ages_years.begin(), ages_years.end());
    if (!cfg.target_equals_input) {
        std::uniform_real_distribution<double> dist(0.0, cfg.max_age);
        for (auto& a : target_years) a = dist(state.rng);
    }
    std::vector<double> in_norm;
    std::vector<double> out_norm;
    for (std::size_t i = 0; i < ages_years.size(); ++i) {
        in_norm.push_back(ages_years[i] / cfg.max_age);
        out_norm.push_back(target_years[i] / cfg.max_age);
    }
    const auto age_in = as_tensor(ages_years);
    const auto age_out = as_tensor(target_years);
    const auto ell_in = as_tensor(in_norm);
    const auto ell_out = as_tensor(out_norm);

    state.encoder->train();
    state.generator->train();
    state.discriminator->train();

    auto fake = state.generator->forward(state.encoder->forward(x), ell_out);

    LossReport report;
    state.opt_discriminator->zero_grad();
    auto loss_d = discriminator_objective(state.discriminator, x, ell_in, fake, ell_out);
    report.gan_d = checked(loss_d, "gan_d");
    loss_d.backward();
    state.opt_discriminator->step();

    state.opt_generator->zero_grad();
    GeneratorTerms terms;
    terms.pixel = pixel_loss(x, fake, age_in, age_out);
    terms.identity = identity_loss(state.encoder_pre, x, fake);
    terms.gan_g = gan_g_loss(state.discriminator, fake, ell_out, cfg.g_loss_variant);
    terms.regression = regression_loss(state.regressor, fake, ell_out);
    checked(terms.pixel, "pixel");
    checked(terms.identity, "identity");
    checked(terms.gan_g, "gan_g");
    checked(terms.regression, "regression");
    auto [total, g_report] = generator_objective(cfg.weights, terms);
    checked(total, "total_g");
    total.backward();
    state.opt_generator->step();

    g_report.gan_d = report.gan_d;
    ++state.iteration;
    return g_report;
}

TrainResult train(TrainState& state, const Dataset& dataset, const TrainOptions& options) {
    const TrainConfig& cfg = state.config;
    require(dataset.max_age == cfg.max_age, "dataset max_age differs from the configured max_age");
    require(dataset.image_size() == cfg.image_size, "dataset image_size differs from the configured image_size");
    require(dataset.channels() == cfg.channels, "dataset channel count differs from the configured channels");

    TrainResult result;
    if (!state.regressor_ready) result.regressor_report = pretrain_regressor(state, dataset, options.eval);
    if (!state.encoder_ready) result.encoder_report = pretrain_encoder(state, dataset, options.eval);

    const bool write = !options.out_dir.empty();
    std::ofstream log;
    if (write) {
        fs::create_directories(options.out_dir);
        const fs::path log_path = options.out_dir / "train_log.csv";
        const bool fresh = !fs::exists(log_path) || fs::file_size(log_path) == 0;
        log.open(log_path, std::ios::app);
        if (fresh) log << "iteration," << LossReport::csv_header() << ",wall_seconds\n";
    }

    DenseData data = densify(dataset);
    const auto start = std::chrono::steady_clock::now();
    int ran = 0;
    while (state.epoch < cfg.epochs) {
        if (options.max_epochs_this_run && ran >= *options.max_epochs_this_run) break;
        const int epoch = state.epoch;
        LossReport mean;
        std::size_t count = 0;
        for (const auto& idx : shuffled_batches(dataset.size(), cfg.batch_size, cfg.seed, epoch)) {
            auto ages = pick(data.ages, idx);
            LossReport r = train_step(state, gather(data.images, idx), ages);
            const double w = static_cast<double>(idx.size());
            mean.pixel += w * r.pixel;
            mean.identity += w * r.identity;
            mean.gan_g += w * r.gan_g;
            mean.regression += w * r.regression;
            mean.total_g += w * r.total_g;
            mean.gan_d += w * r.gan_d;
            count += idx.size();
            if (write) {
                const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
                log << state.iteration << ',' << r.csv_row() << ',' << secs << '\n';
            }
        }
        const double n = static_cast<double>(count);
        for (double* f : {&mean.pixel, &mean.identity, &mean.gan_g, &mean.regression, &mean.total_g, &mean.gan_d})
            *f /= n;
        state.epoch = epoch + 1;
        ++ran;
        state.check_frozen();
        EpochSummary summary{state.epoch, mean};
        result.epochs.push_back(summary);
        log_info("epoch %d/%d total_g %.5f pixel %.5f identity %.5f gan_g %.4f regression %.5f gan_d %.4f",
                     state.epoch, cfg.epochs, mean.total_g, mean.pixel, mean.identity, mean.gan_g,
                     mean.regression, mean.gan_d);
        if (options.on_epoch) options.on_epoch(summary);

        if (write) {
            log.flush();
            std::map<std::string, double> metrics{{"total_g", mean.total_g}, {"pixel", mean.pixel},
                                                  {"identity", mean.identity}, {"gan_g", mean.gan_g},
                                                  {"regression", mean.regression}, {"gan_d", mean.gan_d}};
            if (cfg.checkpoint_every > 0 && state.epoch % cfg.checkpoint_every == 0) {
                char name[32];
                std::snprintf(name, sizeof(name), "epoch_%04d", state.epoch);
                save_checkpoint(state, options.out_dir / "checkpoints" / name, metrics);
            }
            if (state.epoch == cfg.epochs) save_checkpoint(state, options.out_dir / "final", metrics);
        }
    }
    return result;
}

TrainState clone_state(const TrainState& state) {
    TrainState copy(state.config);
    copy_params(*state.encoder, *copy.encoder);
    copy_params(*state.generator, *copy.generator);
    copy_params(*state.discriminator, *copy.discriminator);
    copy_params(*state.encoder_pre, *copy.encoder_pre);
    copy_params(*state.regressor, *copy.regressor);
    copy.regressor_ready = state.regressor_ready;
    copy.encoder_ready = state.encoder_ready;
    copy.epoch = state.epoch;
    copy.iteration = state.iteration;
    copy.rng = state.rng;
    copy.regressor_digest = state.regressor_digest;
    copy.encoder_pre_digest = state.encoder_pre_digest;
    if (copy.regressor_ready) {
        set_requires_grad(*copy.regressor, false);
        copy.regressor->eval();
    }
    if (copy.encoder_ready) {
        set_requires_grad(*copy.encoder_pre, false);
        copy.encoder_pre->eval();
    }
    return copy;
}

} // namespace cmaae
