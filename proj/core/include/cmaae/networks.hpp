#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace cmaae {

/// Structural description shared by E, G, D and R.
struct NetworkSpec {
    int image_size = 32;
    int channels = 3;
    int latent_dim = 64;
    int base_filters = 32;
    int rank_count = 60;

    /// Number of stride-2 stages; 2^(n_down + 2) == image_size.
    int n_down() const;
    void validate() const;
    /// FNV-1a over the canonical text form; changes whenever any field does.
    std::uint64_t fingerprint() const;
    std::string to_string() const;

    friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

enum class NetworkKind { Encoder, Generator, Decoder, Discriminator, Regressor };

const char* to_string(NetworkKind kind);

/// Probabilities leaving D are clamped into [kProbEps, 1 - kProbEps].
inline constexpr double kProbEps = 1e-6;

/// Convolutional encoder: stride-2 5x5 convs with doubling channels, ReLU,
/// no normalization, then a linear layer and a sigmoid into [0,1]^latent_dim.
class EncoderImpl : public torch::nn::Module {
public:
    explicit EncoderImpl(const NetworkSpec& spec);
    torch::Tensor forward(const torch::Tensor& x);
    const NetworkSpec& spec() const { return spec_; }

private:
    NetworkSpec spec_;
    std::vector<torch::nn::Conv2d> convs_;
    torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(Encoder);

/// Deconvolutional generator G(z, age). With `age_conditioned == false` it is
/// the throwaway decoder used to pre-train E.
class GeneratorImpl : public torch::nn::Module {
public:
    GeneratorImpl(const NetworkSpec& spec, bool age_conditioned = true);
    /// `ages` holds normalized ages in [0,1], shape [B] or [B,1].
    torch::Tensor forward(const torch::Tensor& z, const torch::Tensor& ages);
    torch::Tensor forward(const torch::Tensor& z);
    const NetworkSpec& spec() const { return spec_; }
    bool age_conditioned() const { return age_conditioned_; }

private:
    torch::Tensor decode(const torch::Tensor& input);

    NetworkSpec spec_;
    bool age_conditioned_;
    int top_channels_;
    torch::nn::Linear fc_{nullptr};
    std::vector<torch::nn::ConvTranspose2d> deconvs_;
};
TORCH_MODULE(Generator);

/// Conditional discriminator D(x, age); the age is appended as a constant
/// input channel. Uses batch normalization after every convolution.
class DiscriminatorImpl : public torch::nn::Module {
public:
    explicit DiscriminatorImpl(const NetworkSpec& spec);
    /// Returns probabilities of shape [B], clamped into (0, 1).
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& ages);
    const NetworkSpec& spec() const { return spec_; }

private:
    NetworkSpec spec_;
    std::vector<torch::nn::Conv2d> convs_;
    std::vector<torch::nn::BatchNorm2d> norms_;
    torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(Discriminator);

/// Ordinal age regressor: D-style backbone and a head of rank_count logits.
class RegressorImpl : public torch::nn::Module {
public:
    explicit RegressorImpl(const NetworkSpec& spec);
    torch::Tensor forward(const torch::Tensor& x);
    const NetworkSpec& spec() const { return spec_; }

private:
    NetworkSpec spec_;
    std::vector<torch::nn::Conv2d> convs_;
    std::vector<torch::nn::BatchNorm2d> norms_;
    torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(Regressor);

/// Fan-in scaled uniform initialization, deterministic in `seed`. Hidden
/// layers use bound sqrt(6 / fan_in), output layers sqrt(3 / fan_in); biases
/// are zero and batch-norm layers start at identity.
void init_params(torch::nn::Module& module, NetworkKind kind, std::uint64_t seed);

/// One named array of a network, as stored on disk.
struct ParamArray {
    std::vector<std::int64_t> shape;
    std::vector<float> values;
};

/// Learnable parameters plus batch-norm buffers of one network, keyed by
/// layer name, tagged with the fingerprint of the spec they were built for.
struct NetworkParams {
    std::uint64_t spec_fingerprint = 0;
    std::map<std::string, ParamArray> arrays;
};

NetworkParams extract_params(const torch::nn::Module& module, const NetworkSpec& spec);
/// Throws UserError when the fingerprint or any array shape disagrees.
void apply_params(const NetworkParams& params, torch::nn::Module& module, const NetworkSpec& spec);

/// FNV-1a digest over every parameter and buffer value.
std::uint64_t params_digest(const torch::nn::Module& module);

void copy_params(const torch::nn::Module& from, torch::nn::Module& to);
/// Disabling also drops any gradient left from earlier training.
void set_requires_grad(torch::nn::Module& module, bool enabled);

/// Checks a [B, C, S, S] batch against the spec.
void check_image_batch(const torch::Tensor& x, const NetworkSpec& spec, const char* who);
/// Flattens ages to [B] and checks they are finite and within [0, 1].
torch::Tensor check_ages(const torch::Tensor& ages, std::int64_t batch, const char* who);

} // namespace cmaae
