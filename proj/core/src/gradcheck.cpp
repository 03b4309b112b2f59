#include "cmaae/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "cmaae/error.hpp"
#include "cmaae/losses.hpp"
#include "cmaae/ordinal.hpp"

namespace cmaae {

namespace {

using LossFn = std::function<torch::Tensor()>;

GradcheckEntry check(const std::string& name, std::vector<torch::Tensor> targets, const LossFn& loss_fn,
                     const GradcheckOptions& opts, std::mt19937_64& rng) {
    for (auto& t : targets) {
        expect(t.is_leaf() && t.requires_grad() && t.scalar_type() == torch::kFloat64 && t.is_contiguous(),
               "gradcheck targets must be contiguous double leaves that require grad");
    }

    auto loss = loss_fn();
    auto grads = torch::autograd::grad({loss}, targets, {}, false, false, true);

    std::int64_t total = 0;
    for (const auto& t : targets) total += t.numel();
    const int wanted = static_cast<int>(std::min<std::int64_t>(opts.coordinates, total));
    std::set<std::int64_t> tried;
    std::uniform_int_distribution<std::int64_t> coord(0, total - 1);

    GradcheckEntry entry;
    entry.name = name;
    torch::NoGradGuard no_grad;
    const double base = loss_fn().item<double>();
    while (entry.coordinates < wanted && static_cast<std::int64_t>(tried.size()) < total) {
        std::int64_t flat = coord(rng);
        if (!tried.insert(flat).second) continue;
        std::size_t ti = 0;
        while (flat >= targets[ti].numel()) flat -= targets[ti++].numel();
        double* p = targets[ti].data_ptr<double>() + flat;
        const double analytic = grads[ti].defined() ? grads[ti].contiguous().data_ptr<double>()[flat] : 0.0;

        const double orig = *p;
        auto at = [&](double offset) {
            *p = orig + offset;
            return loss_fn().item<double>();
        };
        const double h = opts.step;
        const double plus = at(h);
        const double minus = at(-h);
        const double half_plus = at(h / 2);
        const double half_minus = at(-h / 2);
        *p = orig;

        // On five equally spaced samples a smooth loss has three nearly equal
        // second differences; a ReLU switching inside the stencil piles a
        // slope jump s into one or two of them, spreading them by >= s*h/4.
        // The central difference is off by up to s/2 there, so such
        // coordinates are replaced rather than compared.
        const double d1 = minus - 2 * half_minus + base;
        const double d2 = half_minus - 2 * base + half_plus;
        const double d3 = base - 2 * half_plus + plus;
        const double spread = std::max({d1, d2, d3}) - std::min({d1, d2, d3});
        const double slope = std::abs(plus - minus) / (2 * h);
        const double noise = 64 * std::numeric_limits<double>::epsilon() *
                             std::max({std::abs(base), std::abs(plus), std::abs(minus)});
        if (spread > std::max(kKinkRatio * h * std::max(slope, kGradFloor), noise)) {
            ++entry.kinks_skipped;
            continue;
        }
        const double numeric = (plus - minus) / (2.0 * opts.step);

        entry.max_rel_error = std::max(entry.max_rel_error, relative_error(analytic, numeric));
        entry.max_abs_error = std::max(entry.max_abs_error, std::abs(analytic - numeric));
        ++entry.coordinates;
    }
    return entry;
}

std::vector<torch::Tensor> params_of(std::initializer_list<torch::nn::Module*> modules) {
    std::vector<torch::Tensor> out;
    for (auto* m : modules)
        for (auto& p : m->parameters()) out.push_back(p);
    return out;
}

} // namespace

double relative_error(double analytic, double numeric) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), kGradFloor});
    return std::abs(analytic - numeric) / scale;
}

bool GradcheckReport::pass() const {
    return !entries.empty() && std::all_of(entries.begin(), entries.end(), [&](const GradcheckEntry& e) {
        return e.max_rel_error < tolerance;
    });
}

std::string GradcheckReport::to_text() const {
    std::ostringstream os;
    for (const auto& e : entries)
        os << std::left << std::setw(26) << e.name << " coords=" << e.coordinates << " max_rel_error="
           << std::scientific << std::setprecision(3) << e.max_rel_error << " max_abs_error=" << e.max_abs_error
           << " kinks_skipped=" << e.kinks_skipped << (e.max_rel_error < tolerance ? "  ok" : "  FAIL") << std::defaultfloat << '\n';
    return os.str();
}

GradcheckReport run_gradcheck(const GradcheckOptions& opts) {
    require(opts.coordinates >= 1, "gradcheck needs at least one coordinate");
    require(opts.step > 0.0, "gradcheck step must be positive");
    const NetworkSpec& spec = opts.spec;
    spec.validate();
    const double max_age = 60.0;

    Encoder encoder(spec);
    Generator generator(spec, true);
    Discriminator discriminator(spec);
    Encoder encoder_pre(spec);
    Regressor regressor(spec);
    init_params(*encoder, NetworkKind::Encoder, opts.seed);
    init_params(*generator, NetworkKind::Generator, opts.seed);
    init_params(*discriminator, NetworkKind::Discriminator, opts.seed);
    init_params(*encoder_pre, NetworkKind::Encoder, opts.seed + 1);
    init_params(*regressor, NetworkKind::Regressor, opts.seed);
    for (torch::nn::Module* m : std::initializer_list<torch::nn::Module*>{
             encoder.ptr().get(), generator.ptr().get(), discriminator.ptr().get(), encoder_pre.ptr().get(),
             regressor.ptr().get()})
        m->to(torch::kFloat64);
    set_requires_grad(*encoder_pre, false);
    set_requires_grad(*regressor, false);
    regressor->eval();

    // Give R non-trivial running statistics so its eval path is not an identity.
    {
        torch::NoGradGuard no_grad;
        for (auto& b : regressor->named_buffers()) {
            if (b.key().find("running_var") != std::string::npos) b.value().fill_(0.5);
            if (b.key().find("running_mean") != std::string::npos) b.value().fill_(0.01);
        }
    }

    torch::manual_seed(static_cast<std::uint64_t>(opts.seed));
    auto dopt = torch::TensorOptions().dtype(torch::kFloat64);
    const auto b = opts.batch;
    auto x = 0.05 + 0.9 * torch::rand({b, spec.channels, spec.image_size, spec.image_size}, dopt);
    auto x_fake = (0.05 + 0.9 * torch::rand({b, spec.channels, spec.image_size, spec.image_size}, dopt))
                      .set_requires_grad(true);
    auto ell_in = torch::rand({b}, dopt);
    auto ell_out = torch::rand({b}, dopt);
    auto age_in = ell_in * max_age;
    // Keep every gap above the 1-year clamp so the division is exercised.
    auto age_out = torch::remainder(age_in + 5.0 + 40.0 * torch::rand({b}, dopt), max_age);
    auto rank_targets = torch::rand({b, spec.rank_count}, dopt).lt(0.5).to(torch::kFloat64);

    std::mt19937_64 rng(opts.seed * 7919 + 17);
    GradcheckReport report;
    report.tolerance = 1e-4;

    report.entries.push_back(check("gan_d (D params)", params_of({discriminator.ptr().get()}),
                                   [&] { return gan_d_loss(discriminator, x, ell_in, x_fake, ell_out); }, opts, rng));
    report.entries.push_back(check("gan_g saturating (x_hat)", {x_fake},
                                   [&] {
                                       return gan_g_loss(discriminator, x_fake, ell_out, GanGeneratorLoss::Saturating);
                                   },
                                   opts, rng));
    report.entries.push_back(check("gan_g nonsaturating (x_hat)", {x_fake},
                                   [&] {
                                       return gan_g_loss(discriminator, x_fake, ell_out,
                                                         GanGeneratorLoss::NonSaturating);
                                   },
                                   opts, rng));
    report.entries.push_back(check("regression (x_hat)", {x_fake},
                                   [&] { return regression_loss(regressor, x_fake, ell_out); }, opts, rng));
    report.entries.push_back(check("identity (x_hat)", {x_fake},
                                   [&] { return identity_loss(encoder_pre, x, x_fake); }, opts, rng));
    report.entries.push_back(check("pixel (x_hat)", {x_fake},
                                   [&] { return pixel_loss(x, x_fake, age_in, age_out); }, opts, rng));
    report.entries.push_back(check("generator objective (E,G)",
                                   params_of({encoder.ptr().get(), generator.ptr().get()}),
                                   [&] {
                                       auto fake = generator->forward(encoder->forward(x), ell_out);
                                       GeneratorTerms terms{pixel_loss(x, fake, age_in, age_out),
                                                            identity_loss(encoder_pre, x, fake),
                                                            gan_g_loss(discriminator, fake, ell_out,
                                                                       GanGeneratorLoss::Saturating),
                                                            regression_loss(regressor, fake, ell_out)};
                                       return generator_objective(LossWeights::morph(), terms).first;
                                   },
                                   opts, rng));
    {
        set_requires_grad(*regressor, true);
        regressor->train();
        report.entries.push_back(check("rank loss (R params)", params_of({regressor.ptr().get()}),
                                       [&] { return rank_loss(regressor->forward(x), rank_targets); }, opts, rng));
    }
    return report;
}

} // namespace cmaae
