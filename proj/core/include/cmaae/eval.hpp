#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "cmaae/data.hpp"
#include "cmaae/training.hpp"

namespace cmaae {

/// Maps a float NCHW batch and normalized target ages [B] to generated images.
using Synthesizer = std::function<torch::Tensor(const torch::Tensor& x, const torch::Tensor& target_normalized)>;

/// x_hat = G(E(x), age) in evaluation mode, without gradients.
Synthesizer make_synthesizer(TrainState& state);

/// Networks an evaluation may consult besides the synthesizer.
struct EvalModels {
    Synthesizer synthesize;
    Regressor* regressor = nullptr;      ///< frozen R, for R-based MAE
    Encoder* identity_encoder = nullptr; ///< frozen E_pre, for latent distance
    double max_age = 60.0;
    double bin_width = 1.0;
};

EvalModels eval_models(TrainState& state);

struct SweepGrid {
    std::vector<ImageTensor> sources;
    std::vector<std::string> source_names;
    std::vector<double> ages;                    ///< ascending, years
    std::vector<std::vector<ImageTensor>> cells; ///< [row][age index]
};

/// One row per source image: the source, then one generated face per target
/// age in ascending order. Ages must lie in [0, max_age].
SweepGrid synthesize_sweep(const Synthesizer& synthesize, const std::vector<ImageTensor>& sources,
                           std::vector<double> target_ages, double max_age);

/// Writes an 8-bit montage PNG and a JSON sidecar with sources, ages and cell geometry.
void write_sweep(const SweepGrid& grid, const std::filesystem::path& png_path,
                 const std::filesystem::path& json_path);

struct Stat {
    double mean = 0.0;
    double std = 0.0;
    std::size_t n = 0;
};

Stat summarize(const std::vector<double>& values);

struct EvalReport {
    std::optional<Stat> oracle_mae;         ///< years, synthetic data only
    std::optional<Stat> regressor_mae;      ///< years, via hard-decoded R
    std::optional<Stat> identity_oracle;    ///< oracle_identity_distance(x_hat, x)
    std::optional<Stat> identity_latent;    ///< ||E_pre(x_hat) - E_pre(x)||_2
    std::size_t n = 0;
    std::vector<std::uint64_t> seeds;

    std::string to_json() const;
};

enum class TargetAges {
    Uniform,  ///< drawn uniformly from [0, max_age]
    Input,    ///< the item's own age (reconstruction)
};

/// For each item, draws `ages_per_item` target ages uniformly from [0, max_age],
/// generates, and scores |estimated age - target|. The estimator is the
/// analytic oracle when `use_oracle` (synthetic data only) and hard-decoded R
/// when a regressor is available. Identity distances are filled as well.
EvalReport evaluate_aging_accuracy(const EvalModels& models, const Dataset& dataset, int ages_per_item,
                                   bool use_oracle, std::uint64_t seed, TargetAges mode = TargetAges::Uniform);

struct IdentityStats {
    Stat latent;
    std::optional<Stat> oracle;
};

IdentityStats evaluate_identity(const EvalModels& models, const Dataset& dataset, int ages_per_item,
                                std::uint64_t seed);

/// One training arm of an ablation.
struct AblationArm {
    std::string name;
    LossWeights weights;
};

struct AblationArmResult {
    std::string name;
    std::vector<EvalReport> per_seed;
    double mean_oracle_mae = 0.0;
    double mean_identity_oracle = 0.0;
    double std_oracle_mae = 0.0;  ///< sample std over seeds
    double std_identity_oracle = 0.0;
};

struct AblationResult {
    std::vector<AblationArmResult> arms;
    std::vector<std::uint64_t> seeds;

    const AblationArmResult& arm(const std::string& name) const;
    std::string to_json() const;
};

struct AblationOptions {
    std::vector<std::uint64_t> seeds{0, 1, 2};
    int ages_per_item = 4;
    /// Per-arm training output under `<out_dir>/<arm>_seed<k>/`; empty writes nothing.
    std::filesystem::path out_dir;
};

/// Trains every arm from a shared per-seed pre-training (R and E are
/// pre-trained once per seed and copied into each arm) and evaluates each on
/// `test` with the oracle.
AblationResult run_ablation(const TrainConfig& config, const Dataset& train, const Dataset& test,
                            const std::vector<AblationArm>& arms, const AblationOptions& options);

struct RAblation {
    AblationResult result;
    double mae_with = 0.0;
    double mae_without = 0.0;
    double ratio = 0.0;  ///< mae_without / mae_with
    bool pass = false;   ///< mae_with < 0.6 * mae_without

    std::string summary_line() const;
};

/// Paired arms differing only in the regression weight (configured vs 0).
RAblation ablation_with_without_R(const TrainConfig& config, const Dataset& train, const Dataset& test,
                                  const AblationOptions& options);

} // namespace cmaae
