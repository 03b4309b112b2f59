#include "cmaae/losses.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "cmaae/error.hpp"
#include "cmaae/ordinal.hpp"

namespace cmaae {

void LossWeights::validate() const {
    for (double w : {pixel, identity, gan, regression})
        require(std::isfinite(w) && w >= 0.0, "loss weights must be finite and non-negative");
}

const char* to_string(GanGeneratorLoss variant) {
    return variant == GanGeneratorLoss::Saturating ? "saturating" : "nonsaturating";
}

GanGeneratorLoss parse_gan_variant(const std::string& text) {
    if (text == "saturating") return GanGeneratorLoss::Saturating;
    if (text == "nonsaturating") return GanGeneratorLoss::NonSaturating;
    throw UserError("unknown g_loss_variant '" + text + "' (expected saturating or nonsaturating)");
}

std::string LossReport::csv_header() {
    return "pixel,identity,gan_g,regression,total_g,gan_d";
}

std::string LossReport::csv_row() const {
    std::ostringstream os;
    os << std::setprecision(9) << pixel << ',' << identity << ',' << gan_g << ',' << regression << ','
       << total_g << ',' << gan_d;
    return os.str();
}

FrozenScope::FrozenScope(torch::nn::Module& module) {
    for (auto& p : module.parameters()) {
        saved_.emplace_back(p, p.requires_grad());
        p.set_requires_grad(false);
    }
}

FrozenScope::~FrozenScope() {
    for (auto& [p, flag] : saved_) p.set_requires_grad(flag);
}

namespace {

void require_frozen(torch::nn::Module& module, const char* who) {
    for (const auto& p : module.parameters())
        expect(!p.requires_grad(), std::string(who) + " must be frozen (parameters flagged non-trainable)");
}

} // namespace

torch::Tensor pixel_loss(const torch::Tensor& x, const torch::Tensor& x_hat, const torch::Tensor& age_in_years,
                         const torch::Tensor& age_out_years) {
    require(x.sizes() == x_hat.sizes(), "pixel_loss: shape mismatch");
    require(x.dim() == 4, "pixel_loss: expected [B, C, H, W] tensors");
    const auto batch = x.size(0);
    auto a_in = age_in_years.reshape({-1}).to(x_hat.dtype());
    auto a_out = age_out_years.reshape({-1}).to(x_hat.dtype());
    require(a_in.size(0) == batch && a_out.size(0) == batch, "pixel_loss: one age pair per item");
    const double elems = static_cast<double>(x.size(1) * x.size(2) * x.size(3));
    auto gap = (a_in - a_out).abs().clamp_min(kMinAgeGap);
    auto sq = (x_hat - x).pow(2).flatten(1).sum(1);
    return (sq / (gap * elems)).mean();
}

torch::Tensor pixel_loss(const torch::Tensor& x, const torch::Tensor& x_hat, double age_in_years,
                         double age_out_years) {
    const auto batch = x.size(0);
    auto opts = torch::TensorOptions().dtype(torch::kFloat64);
    return pixel_loss(x, x_hat, torch::full({batch}, age_in_years, opts), torch::full({batch}, age_out_years, opts));
}

torch::Tensor identity_loss_codes(const torch::Tensor& z_hat, const torch::Tensor& z_ref) {
    require(z_hat.sizes() == z_ref.sizes(), "identity_loss: latent shape mismatch");
    return (z_hat - z_ref).pow(2).flatten(1).sum(1).mean();
}

torch::Tensor identity_loss(Encoder& frozen_encoder, const torch::Tensor& x, const torch::Tensor& x_hat) {
    require_frozen(*frozen_encoder, "identity encoder");
    require(x.sizes() == x_hat.sizes(), "identity_loss: shape mismatch");
    torch::Tensor z_ref;
    {
        torch::NoGradGuard no_grad;
        z_ref = frozen_encoder->forward(x);
    }
    return identity_loss_codes(frozen_encoder->forward(x_hat), z_ref);
}

torch::Tensor gan_d_loss_probs(const torch::Tensor& p_real, const torch::Tensor& p_fake) {
    return -torch::log(p_real).mean() - torch::log(1.0 - p_fake).mean();
}

torch::Tensor gan_d_loss(Discriminator& d, const torch::Tensor& real, const torch::Tensor& real_ages,
                         const torch::Tensor& fake, const torch::Tensor& fake_ages) {
    auto p_real = d->forward(real, real_ages);
    auto p_fake = d->forward(fake.detach(), fake_ages);
    return gan_d_loss_probs(p_real, p_fake);
}

torch::Tensor gan_g_loss_probs(const torch::Tensor& p_fake, GanGeneratorLoss variant) {
    if (variant == GanGeneratorLoss::Saturating) return torch::log(1.0 - p_fake).mean();
    return -torch::log(p_fake).mean();
}

torch::Tensor gan_g_loss(Discriminator& d, const torch::Tensor& fake, const torch::Tensor& fake_ages,
                         GanGeneratorLoss variant) {
    FrozenScope frozen(*d);
    return gan_g_loss_probs(d->forward(fake, fake_ages), variant);
}

torch::Tensor regression_loss_soft(const torch::Tensor& soft_ages, const torch::Tensor& target_normalized) {
    auto target = target_normalized.reshape({-1}).to(soft_ages.dtype());
    require(soft_ages.sizes() == target.sizes(), "regression_loss: one target per item");
    return (soft_ages - target).pow(2).mean();
}

torch::Tensor regression_loss(Regressor& frozen_regressor, const torch::Tensor& x_hat,
                              const torch::Tensor& target_normalized) {
    require_frozen(*frozen_regressor, "ordinal regressor");
    return regression_loss_soft(soft_age(frozen_regressor->forward(x_hat)), target_normalized);
}

std::pair<torch::Tensor, LossReport> generator_objective(const LossWeights& weights, const GeneratorTerms& terms) {
    weights.validate();
    auto total = weights.pixel * terms.pixel + weights.identity * terms.identity + weights.gan * terms.gan_g +
                 weights.regression * terms.regression;
    LossReport report;
    report.pixel = terms.pixel.item<double>();
    report.identity = terms.identity.item<double>();
    report.gan_g = terms.gan_g.item<double>();
    report.regression = terms.regression.item<double>();
    report.total_g = weights.pixel * report.pixel + weights.identity * report.identity +
                     weights.gan * report.gan_g + weights.regression * report.regression;
    return {total, report};
}

torch::Tensor discriminator_objective(Discriminator& d, const torch::Tensor& real, const torch::Tensor& real_ages,
                                      const torch::Tensor& fake, const torch::Tensor& fake_ages) {
    return gan_d_loss(d, real, real_ages, fake, fake_ages);
}

} // namespace cmaae
