#include "cmaae/networks.hpp"

#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

#include "cmaae/error.hpp"

namespace nn = torch::nn;

namespace cmaae {

namespace {

constexpr int kKernel = 5;
constexpr int kPad = 2;
constexpr int kBottleneck = 4;

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void fnv_mix(std::uint64_t& h, const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= bytes[i];
        h *= kFnvPrime;
    }
}

nn::Conv2d make_down(int in, int out) {
    return nn::Conv2d(nn::Conv2dOptions(in, out, kKernel).stride(2).padding(kPad));
}

nn::ConvTranspose2d make_up(int in, int out) {
    return nn::ConvTranspose2d(
        nn::ConvTranspose2dOptions(in, out, kKernel).stride(2).padding(kPad).output_padding(1));
}

int flat_features(const NetworkSpec& spec) {
    return (spec.base_filters << (spec.n_down() - 1)) * kBottleneck * kBottleneck;
}

bool is_output_layer(const std::string& name) {
    return name == "head" || name == "out";
}

} // namespace

int NetworkSpec::n_down() const {
    int n = 0;
    for (int s = image_size; s > kBottleneck; s >>= 1) ++n;
    return n;
}

void NetworkSpec::validate() const {
    require(image_size >= 16 && (image_size & (image_size - 1)) == 0,
            "image_size must be a power of two >= 16");
    require(channels == 1 || channels == 3, "channels must be 1 or 3");
    require(latent_dim >= 1, "latent_dim must be >= 1");
    require(base_filters >= 1, "base_filters must be >= 1");
    require(rank_count >= 1, "rank_count must be >= 1");
    require(n_down() >= 2 && (1 << (n_down() + 2)) == image_size, "n_down must satisfy 2^(n_down+2) == image_size");
}

std::string NetworkSpec::to_string() const {
    std::ostringstream os;
    os << "image_size=" << image_size << ";channels=" << channels << ";latent_dim=" << latent_dim
       << ";base_filters=" << base_filters << ";rank_count=" << rank_count << ";n_down=" << n_down()
       << ";kernel=" << kKernel << ";bn=D,R";
    return os.str();
}

std::uint64_t NetworkSpec::fingerprint() const {
    std::uint64_t h = kFnvOffset;
    const std::string text = to_string();
    fnv_mix(h, text.data(), text.size());
    return h;
}

const char* to_string(NetworkKind kind) {
    switch (kind) {
    case NetworkKind::Encoder: return "E";
    case NetworkKind::Generator: return "G";
    case NetworkKind::Decoder: return "decoder";
    case NetworkKind::Discriminator: return "D";
    case NetworkKind::Regressor: return "R";
    }
    return "?";
}

void check_image_batch(const torch::Tensor& x, const NetworkSpec& spec, const char* who) {
    if (x.dim() != 4 || x.size(1) != spec.channels || x.size(2) != spec.image_size ||
        x.size(3) != spec.image_size) {
        std::ostringstream os;
        os << who << ": expected [B, " << spec.channels << ", " << spec.image_size << ", " << spec.image_size
           << "] input, got " << x.sizes();
        throw UserError(os.str());
    }
}

torch::Tensor check_ages(const torch::Tensor& ages, std::int64_t batch, const char* who) {
    auto flat = ages.reshape({-1});
    require(flat.size(0) == batch, std::string(who) + ": one age per batch item required");
    auto bounds = torch::stack({flat.min(), flat.max()}).detach().to(torch::kFloat64);
    const double lo = bounds[0].item<double>();
    const double hi = bounds[1].item<double>();
    require(std::isfinite(lo) && std::isfinite(hi) && lo >= 0.0 && hi <= 1.0,
            std::string(who) + ": normalized ages must lie in [0, 1]");
    return flat;
}

// ---------------------------------------------------------------- encoder

EncoderImpl::EncoderImpl(const NetworkSpec& spec) : spec_(spec) {
    spec_.validate();
    int in = spec_.channels;
    for (int i = 0; i < spec_.n_down(); ++i) {
        const int out = spec_.base_filters << i;
        convs_.push_back(register_module("conv" + std::to_string(i), make_down(in, out)));
        in = out;
    }
    head_ = register_module("head", nn::Linear(flat_features(spec_), spec_.latent_dim));
}

torch::Tensor EncoderImpl::forward(const torch::Tensor& x) {
    check_image_batch(x, spec_, "encoder");
    auto h = x;
    for (auto& conv : convs_) h = torch::relu(conv->forward(h));
    return torch::sigmoid(head_->forward(h.flatten(1)));
}

// -------------------------------------------------------------- generator

GeneratorImpl::GeneratorImpl(const NetworkSpec& spec, bool age_conditioned)
    : spec_(spec), age_conditioned_(age_conditioned) {
    spec_.validate();
    const int n = spec_.n_down();
    top_channels_ = spec_.base_filters << n;
    const int in_features = spec_.latent_dim + (age_conditioned_ ? 1 : 0);
    fc_ = register_module("fc", nn::Linear(in_features, top_channels_ * kBottleneck * kBottleneck));
    int in = top_channels_;
    for (int i = 0; i < n; ++i) {
        const bool last = i == n - 1;
        const int out = last ? spec_.channels : in / 2;
        deconvs_.push_back(register_module(last ? "out" : "deconv" + std::to_string(i), make_up(in, out)));
        in = out;
    }
}

torch::Tensor GeneratorImpl::decode(const torch::Tensor& input) {
    auto h = torch::relu(fc_->forward(input)).view({input.size(0), top_channels_, kBottleneck, kBottleneck});
    for (std::size_t i = 0; i < deconvs_.size(); ++i) {
        h = deconvs_[i]->forward(h);
        if (i + 1 < deconvs_.size()) h = torch::relu(h);
    }
    return torch::sigmoid(h);
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& z, const torch::Tensor& ages) {
    expect(age_conditioned_, "generator was built without the age input");
    require(z.dim() == 2 && z.size(1) == spec_.latent_dim, "generator: z must be [B, latent_dim]");
    auto flat = check_ages(ages, z.size(0), "generator");
    return decode(torch::cat({z, flat.to(z.dtype()).unsqueeze(1)}, 1));
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& z) {
    expect(!age_conditioned_, "age-conditioned generator needs ages");
    require(z.dim() == 2 && z.size(1) == spec_.latent_dim, "decoder: z must be [B, latent_dim]");
    return decode(z);
}

// ---------------------------------------------------------- discriminator

DiscriminatorImpl::DiscriminatorImpl(const NetworkSpec& spec) : spec_(spec) {
    spec_.validate();
    int in = spec_.channels + 1;
    for (int i = 0; i < spec_.n_down(); ++i) {
        const int out = spec_.base_filters << i;
        convs_.push_back(register_module("conv" + std::to_string(i), make_down(in, out)));
        norms_.push_back(register_module("bn" + std::to_string(i), nn::BatchNorm2d(out)));
        in = out;
    }
    head_ = register_module("head", nn::Linear(flat_features(spec_), 1));
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& x, const torch::Tensor& ages) {
    check_image_batch(x, spec_, "discriminator");
    auto flat = check_ages(ages, x.size(0), "discriminator");
    auto age_plane = flat.to(x.dtype()).view({-1, 1, 1, 1}).expand({-1, 1, spec_.image_size, spec_.image_size});
    auto h = torch::cat({x, age_plane}, 1);
    for (std::size_t i = 0; i < convs_.size(); ++i) h = torch::relu(norms_[i]->forward(convs_[i]->forward(h)));
    auto p = torch::sigmoid(head_->forward(h.flatten(1))).squeeze(1);
    return p.clamp(kProbEps, 1.0 - kProbEps);
}

// -------------------------------------------------------------- regressor

RegressorImpl::RegressorImpl(const NetworkSpec& spec) : spec_(spec) {
    spec_.validate();
    int in = spec_.channels;
    for (int i = 0; i < spec_.n_down(); ++i) {
        const int out = spec_.base_filters << i;
        convs_.push_back(register_module("conv" + std::to_string(i), make_down(in, out)));
        norms_.push_back(register_module("bn" + std::to_string(i), nn::BatchNorm2d(out)));
        in = out;
    }
    head_ = register_module("head", nn::Linear(flat_features(spec_), spec_.rank_count));
}

torch::Tensor RegressorImpl::forward(const torch::Tensor& x) {
    check_image_batch(x, spec_, "regressor");
    auto h = x;
    for (std::size_t i = 0; i < convs_.size(); ++i) h = torch::relu(norms_[i]->forward(convs_[i]->forward(h)));
    return head_->forward(h.flatten(1));
}

// ------------------------------------------------------------ parameters

void init_params(nn::Module& module, NetworkKind kind, std::uint64_t seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(kind) + 1u};
    std::mt19937_64 rng(seq);
    torch::NoGradGuard no_grad;

    for (const auto& item : module.named_children()) {
        const std::string& name = item.key();
        const auto& child = item.value();
        const double out_scale = is_output_layer(name) ? 3.0 : 6.0;

        torch::Tensor weight;
        torch::Tensor bias;
        double fan_in = 0.0;
        if (auto* conv = child->as<nn::Conv2dImpl>()) {
            weight = conv->weight;
            bias = conv->bias;
            fan_in = static_cast<double>(weight.size(1) * weight.size(2) * weight.size(3));
        } else if (auto* deconv = child->as<nn::ConvTranspose2dImpl>()) {
            weight = deconv->weight;
            bias = deconv->bias;
            // A stride-2 transposed conv feeds each output from ~k^2/4 taps per input channel.
            fan_in = static_cast<double>(weight.size(0) * weight.size(2) * weight.size(3)) / 4.0;
        } else if (auto* linear = child->as<nn::LinearImpl>()) {
            weight = linear->weight;
            bias = linear->bias;
            fan_in = static_cast<double>(weight.size(1));
        } else if (auto* bn = child->as<nn::BatchNorm2dImpl>()) {
            bn->weight.fill_(1.0);
            bn->bias.zero_();
            bn->running_mean.zero_();
            bn->running_var.fill_(1.0);
            bn->num_batches_tracked.zero_();
            continue;
        } else {
            continue;
        }

        const double bound = std::sqrt(out_scale / fan_in);
        std::uniform_real_distribution<double> dist(-bound, bound);
        auto cpu = torch::empty(weight.sizes(), torch::kFloat64);
        double* p = cpu.data_ptr<double>();
        for (std::int64_t i = 0; i < cpu.numel(); ++i) p[i] = dist(rng);
        weight.copy_(cpu);
        if (bias.defined()) bias.zero_();
    }
}

NetworkParams extract_params(const nn::Module& module, const NetworkSpec& spec) {
    NetworkParams params;
    params.spec_fingerprint = spec.fingerprint();
    auto add = [&](const std::string& name, const torch::Tensor& t) {
        auto cpu = t.detach().to(torch::kCPU, torch::kFloat32).contiguous();
        ParamArray arr;
        arr.shape.assign(cpu.sizes().begin(), cpu.sizes().end());
        arr.values.assign(cpu.data_ptr<float>(), cpu.data_ptr<float>() + cpu.numel());
        params.arrays.emplace(name, std::move(arr));
    };
    for (const auto& p : module.named_parameters()) add(p.key(), p.value());
    for (const auto& b : module.named_buffers()) add(b.key(), b.value());
    return params;
}

void apply_params(const NetworkParams& params, nn::Module& module, const NetworkSpec& spec) {
    require(params.spec_fingerprint == spec.fingerprint(),
            "network spec fingerprint mismatch: parameters were created for a different architecture");
    torch::NoGradGuard no_grad;
    auto load = [&](const std::string& name, torch::Tensor& t) {
        auto it = params.arrays.find(name);
        require(it != params.arrays.end(), "missing parameter array '" + name + "'");
        const ParamArray& arr = it->second;
        require(std::vector<std::int64_t>(t.sizes().begin(), t.sizes().end()) == arr.shape,
                "shape mismatch for parameter array '" + name + "'");
        auto src = torch::from_blob(const_cast<float*>(arr.values.data()), t.sizes(), torch::kFloat32);
        t.copy_(src.to(t.dtype()));
    };
    std::size_t expected = 0;
    for (auto& p : module.named_parameters()) { load(p.key(), p.value()); ++expected; }
    for (auto& b : module.named_buffers()) { load(b.key(), b.value()); ++expected; }
    require(expected == params.arrays.size(), "parameter file has unexpected extra arrays");
}

std::uint64_t params_digest(const nn::Module& module) {
    std::uint64_t h = kFnvOffset;
    auto mix = [&](const std::string& name, const torch::Tensor& t) {
        fnv_mix(h, name.data(), name.size());
        auto cpu = t.detach().to(torch::kCPU).contiguous();
        fnv_mix(h, cpu.data_ptr(), cpu.numel() * cpu.element_size());
    };
    for (const auto& p : module.named_parameters()) mix(p.key(), p.value());
    for (const auto& b : module.named_buffers()) mix(b.key(), b.value());
    return h;
}

void copy_params(const nn::Module& from, nn::Module& to) {
    torch::NoGradGuard no_grad;
    auto src_p = from.named_parameters();
    auto dst_p = to.named_parameters();
    expect(src_p.size() == dst_p.size(), "copy_params: parameter sets differ");
    for (const auto& p : src_p) dst_p[p.key()].copy_(p.value());
    auto src_b = from.named_buffers();
    auto dst_b = to.named_buffers();
    expect(src_b.size() == dst_b.size(), "copy_params: buffer sets differ");
    for (const auto& b : src_b) dst_b[b.key()].copy_(b.value());
}

void set_requires_grad(nn::Module& module, bool enabled) {
    for (auto& p : module.parameters()) {
        p.set_requires_grad(enabled);
        if (!enabled) p.mutable_grad() = torch::Tensor();
    }
}

} // namespace cmaae
