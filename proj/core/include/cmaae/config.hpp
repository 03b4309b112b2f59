#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cmaae/losses.hpp"
#include "cmaae/networks.hpp"

namespace cmaae {

struct TrainConfig {
    double learning_rate = 1e-4;
    double weight_decay = 1e-5;
    int batch_size = 100;
    int epochs = 200;
    int pretrain_regressor_epochs = 30;
    int pretrain_encoder_epochs = 30;
    LossWeights weights = LossWeights::morph();
    std::uint64_t seed = 0;
    GanGeneratorLoss g_loss_variant = GanGeneratorLoss::Saturating;

    int image_size = 32;
    int channels = 3;
    int latent_dim = 64;
    int base_filters = 32;
    double max_age = 60.0;
    double bin_width = 1.0;

    /// Phase-3 epochs between checkpoints; 0 disables periodic checkpoints.
    int checkpoint_every = 5;
    /// Condition G on the input age instead of a sampled target age.
    bool target_equals_input = false;
    /// Weight of the optional identity-classification head during encoder
    /// pre-training (0 = reconstruction only).
    double identity_aux_weight = 0.0;

    /// Single-CPU preset: batch 64, 30 epochs per phase, 32x32 images.
    static TrainConfig desk();

    NetworkSpec network_spec() const;
    void validate() const;

    /// Flat key/value form, one entry per field, in a fixed order.
    std::vector<std::pair<std::string, std::string>> to_kv() const;
};

/// Every key understood by apply_setting, in to_kv() order.
const std::vector<std::string>& config_keys();

/// Sets one field from text; unknown keys and malformed values throw UserError.
/// The pseudo-key `preset` accepts morph, utkface (loss weights) or desk
/// (batch size and per-phase epochs); other fields are left alone.
void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value);

/// Parses `key = value` lines; `#` starts a comment.
std::map<std::string, std::string> parse_config_text(const std::string& text);
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

/// Defaults, then file values, then explicit overrides (CLI).
TrainConfig resolve_config(const std::map<std::string, std::string>& file_values,
                           const std::map<std::string, std::string>& overrides,
                           TrainConfig base = TrainConfig{});

std::string format_double(double value);

} // namespace cmaae
