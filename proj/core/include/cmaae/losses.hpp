#pragma once

#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "cmaae/networks.hpp"

namespace cmaae {

/// Coefficients of the generator objective (pixel, identity, GAN, regression).
struct LossWeights {
    double pixel = 0.10;
    double identity = 1.00;
    double gan = 1.00;
    double regression = 0.02;

    static LossWeights morph() { return {0.10, 1.00, 1.00, 0.02}; }
    static LossWeights utkface() { return {0.50, 1.00, 1.00, 0.01}; }

    void validate() const;
    friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

enum class GanGeneratorLoss { Saturating, NonSaturating };

const char* to_string(GanGeneratorLoss variant);
GanGeneratorLoss parse_gan_variant(const std::string& text);

struct LossReport {
    double pixel = 0.0;
    double identity = 0.0;
    double gan_g = 0.0;
    double regression = 0.0;
    double total_g = 0.0;
    double gan_d = 0.0;

    static std::string csv_header();
    std::string csv_row() const;
};

/// Disables gradients on a module's parameters for the scope's lifetime and
/// restores each parameter's previous flag afterwards.
class FrozenScope {
public:
    explicit FrozenScope(torch::nn::Module& module);
    ~FrozenScope();
    FrozenScope(const FrozenScope&) = delete;
    FrozenScope& operator=(const FrozenScope&) = delete;

private:
    std::vector<std::pair<torch::Tensor, bool>> saved_;
};

/// Smallest age gap (years) the pixel loss divides by.
inline constexpr double kMinAgeGap = 1.0;

/// Age-distance weighted squared error. Per item:
///   ||x_hat - x||^2 / (max(|age_in - age_out|, 1) * W * H * C),
/// averaged over the batch. Ages are in years, shape [B].
torch::Tensor pixel_loss(const torch::Tensor& x, const torch::Tensor& x_hat,
                         const torch::Tensor& age_in_years, const torch::Tensor& age_out_years);
torch::Tensor pixel_loss(const torch::Tensor& x, const torch::Tensor& x_hat, double age_in_years,
                         double age_out_years);

/// Batch mean of ||z_hat - z_ref||^2.
torch::Tensor identity_loss_codes(const torch::Tensor& z_hat, const torch::Tensor& z_ref);

/// Identity loss through a frozen encoder. Gradients reach x_hat only; the
/// reference code E_pre(x) is computed without a graph.
torch::Tensor identity_loss(Encoder& frozen_encoder, const torch::Tensor& x, const torch::Tensor& x_hat);

/// mean[-log p_real] + mean[-log(1 - p_fake)].
torch::Tensor gan_d_loss_probs(const torch::Tensor& p_real, const torch::Tensor& p_fake);

/// Discriminator loss. Fakes are detached so only D receives gradients.
torch::Tensor gan_d_loss(Discriminator& d, const torch::Tensor& real, const torch::Tensor& real_ages,
                         const torch::Tensor& fake, const torch::Tensor& fake_ages);

/// Saturating: mean[log(1 - p)]. Non-saturating: mean[-log p].
torch::Tensor gan_g_loss_probs(const torch::Tensor& p_fake, GanGeneratorLoss variant);

/// Generator adversarial loss; D's parameters are frozen while the graph is
/// built, so gradients flow only into the producer of `fake`.
torch::Tensor gan_g_loss(Discriminator& d, const torch::Tensor& fake, const torch::Tensor& fake_ages,
                         GanGeneratorLoss variant);

/// Batch mean of (soft_age - target)^2, both normalized.
torch::Tensor regression_loss_soft(const torch::Tensor& soft_ages, const torch::Tensor& target_normalized);

/// Regression loss through a frozen ordinal regressor.
torch::Tensor regression_loss(Regressor& frozen_regressor, const torch::Tensor& x_hat,
                              const torch::Tensor& target_normalized);

struct GeneratorTerms {
    torch::Tensor pixel;
    torch::Tensor identity;
    torch::Tensor gan_g;
    torch::Tensor regression;
};

/// Weighted generator objective; the report carries each component and the total.
std::pair<torch::Tensor, LossReport> generator_objective(const LossWeights& weights, const GeneratorTerms& terms);

/// The discriminator objective is the discriminator GAN loss itself.
torch::Tensor discriminator_objective(Discriminator& d, const torch::Tensor& real, const torch::Tensor& real_ages,
                                      const torch::Tensor& fake, const torch::Tensor& fake_ages);

} // namespace cmaae
