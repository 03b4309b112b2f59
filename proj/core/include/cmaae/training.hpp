#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <torch/torch.h>

#include "cmaae/config.hpp"
#include "cmaae/data.hpp"
#include "cmaae/losses.hpp"
#include "cmaae/networks.hpp"
#include "cmaae/ordinal.hpp"

namespace cmaae {

/// Everything the three-phase protocol owns: trainable E, G, D with their
/// optimizers, the frozen E_pre and R, counters and the target-age RNG.
struct TrainState {
    explicit TrainState(const TrainConfig& config);

    TrainConfig config;
    NetworkSpec spec;

    Encoder encoder;
    Generator generator;
    Discriminator discriminator;
    Encoder encoder_pre;
    Regressor regressor;

    /// Joint optimizer over E and G; D has its own.
    std::unique_ptr<torch::optim::Adam> opt_generator;
    std::unique_ptr<torch::optim::Adam> opt_discriminator;

    bool regressor_ready = false;
    bool encoder_ready = false;
    int epoch = 0;               ///< completed adversarial epochs
    std::int64_t iteration = 0;  ///< completed train_step calls
    std::mt19937_64 rng;

    /// Digests recorded when R and E_pre were frozen.
    std::uint64_t regressor_digest = 0;
    std::uint64_t encoder_pre_digest = 0;

    /// Throws ContractError if a frozen network changed since it was frozen.
    void check_frozen() const;
    /// Rebuilds both optimizers (fresh moments) with the current config.
    void reset_optimizers();
};

/// Adam with betas (0.9, 0.999); weight decay applies to weight tensors only,
/// never to biases or batch-norm affine parameters.
std::unique_ptr<torch::optim::Adam> make_adam(const std::vector<torch::nn::Module*>& modules,
                                              double learning_rate, double weight_decay);

/// Batches of dataset indices in a seeded shuffled order.
std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, int batch_size, std::uint64_t seed,
                                                       std::uint64_t epoch);

struct PretrainReport {
    std::vector<double> epoch_losses;
    std::optional<MaeReport> mae;  ///< regressor only, on the evaluation set
    double psnr_db = 0.0;          ///< encoder only, on the evaluation set
};

/// Phase 1: trains R on rank targets, then freezes it (eval mode, no grads).
PretrainReport pretrain_regressor(TrainState& state, const Dataset& train, const Dataset* eval = nullptr);

/// Phase 2: trains E with a throwaway decoder on mean squared reconstruction
/// (plus an optional identity-classification head), then stores a frozen
/// copy as E_pre. E stays trainable.
PretrainReport pretrain_encoder(TrainState& state, const Dataset& train, const Dataset* eval = nullptr);

/// PSNR (dB) of the decoder-free reconstruction G(E(x), age_in) over a set.
double reconstruction_psnr(TrainState& state, const Dataset& dataset);

/// Phase 3: one D step on the discriminator objective, then one joint E/G
/// step on the generator objective. `ages_years` holds the input ages.
LossReport train_step(TrainState& state, const torch::Tensor& x, std::span<const double> ages_years);

struct EpochSummary {
    int epoch = 0;
    LossReport mean;
};

struct TrainOptions {
    /// Output directory for train_log.csv and checkpoints; empty writes nothing.
    std::filesystem::path out_dir;
    const Dataset* eval = nullptr;
    /// Stop after this many adversarial epochs in this call (for interruption tests).
    std::optional<int> max_epochs_this_run;
    std::function<void(const EpochSummary&)> on_epoch;
};

struct TrainResult {
    std::vector<EpochSummary> epochs;
    std::optional<PretrainReport> regressor_report;
    std::optional<PretrainReport> encoder_report;
};

/// Runs whatever phases `state` still needs: R pre-training, E pre-training,
/// then adversarial epochs up to config.epochs. Shuffles with a seeded RNG per
/// epoch, appends to train_log.csv and writes checkpoints under out_dir.
TrainResult train(TrainState& state, const Dataset& dataset, const TrainOptions& options = {});

/// Deep copy of every network, flag and counter; optimizers start fresh.
TrainState clone_state(const TrainState& state);

} // namespace cmaae
