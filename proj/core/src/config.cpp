#include "cmaae/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cmaae/error.hpp"
#include "cmaae/ordinal.hpp"

namespace cmaae {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    require(ec == std::errc() && ptr == v.data() + v.size() && std::isfinite(out),
            "config '" + key + "': expected a number, got '" + v + "'");
    return out;
}

long long to_int(const std::string& key, const std::string& v) {
    long long out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    require(ec == std::errc() && ptr == v.data() + v.size(), "config '" + key + "': expected an integer, got '" + v + "'");
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw UserError("config '" + key + "': expected true/false, got '" + v + "'");
}

} // namespace

std::string format_double(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

TrainConfig TrainConfig::desk() {
    TrainConfig cfg;
    cfg.batch_size = 64;
    cfg.epochs = 30;
    cfg.pretrain_regressor_epochs = 30;
    cfg.pretrain_encoder_epochs = 30;
    return cfg;
}

NetworkSpec TrainConfig::network_spec() const {
    NetworkSpec spec;
    spec.image_size = image_size;
    spec.channels = channels;
    spec.latent_dim = latent_dim;
    spec.base_filters = base_filters;
    spec.rank_count = rank_count(max_age, bin_width);
    return spec;
}

void TrainConfig::validate() const {
    require(std::isfinite(learning_rate) && learning_rate >= 0.0, "learning_rate must be >= 0");
    require(std::isfinite(weight_decay) && weight_decay >= 0.0, "weight_decay must be >= 0");
    require(batch_size >= 1, "batch_size must be >= 1");
    require(epochs >= 1, "epochs must be >= 1");
    require(pretrain_regressor_epochs >= 0 && pretrain_encoder_epochs >= 0, "pre-training epochs must be >= 0");
    require(checkpoint_every >= 0, "checkpoint_every must be >= 0");
    require(identity_aux_weight >= 0.0, "identity_aux_weight must be >= 0");
    weights.validate();
    network_spec().validate();
}

std::vector<std::pair<std::string, std::string>> TrainConfig::to_kv() const {
    return {
        {"learning_rate", format_double(learning_rate)},
        {"weight_decay", format_double(weight_decay)},
        {"batch_size", std::to_string(batch_size)},
        {"epochs", std::to_string(epochs)},
        {"pretrain_regressor_epochs", std::to_string(pretrain_regressor_epochs)},
        {"pretrain_encoder_epochs", std::to_string(pretrain_encoder_epochs)},
        {"lambda_pixel", format_double(weights.pixel)},
        {"lambda_identity", format_double(weights.identity)},
        {"lambda_gan", format_double(weights.gan)},
        {"lambda_regression", format_double(weights.regression)},
        {"seed", std::to_string(seed)},
        {"g_loss_variant", to_string(g_loss_variant)},
        {"image_size", std::to_string(image_size)},
        {"channels", std::to_string(channels)},
        {"latent_dim", std::to_string(latent_dim)},
        {"base_filters", std::to_string(base_filters)},
        {"max_age", format_double(max_age)},
        {"bin_width", format_double(bin_width)},
        {"checkpoint_every", std::to_string(checkpoint_every)},
        {"target_equals_input", target_equals_input ? "true" : "false"},
        {"identity_aux_weight", format_double(identity_aux_weight)},
    };
}

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> out;
        for (const auto& [k, v] : TrainConfig{}.to_kv()) out.push_back(k);
        return out;
    }();
    return keys;
}

void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& raw) {
    const std::string v = trim(raw);
    if (key == "preset") {
        if (v == "desk") {
            const TrainConfig d = TrainConfig::desk();
            cfg.batch_size = d.batch_size;
            cfg.epochs = d.epochs;
            cfg.pretrain_regressor_epochs = d.pretrain_regressor_epochs;
            cfg.pretrain_encoder_epochs = d.pretrain_encoder_epochs;
        }
        else if (v == "morph") cfg.weights = LossWeights::morph();
        else if (v == "utkface") cfg.weights = LossWeights::utkface();
        else throw UserError("unknown preset '" + v + "' (expected desk, morph or utkface)");
    } else if (key == "learning_rate") cfg.learning_rate = to_double(key, v);
    else if (key == "weight_decay") cfg.weight_decay = to_double(key, v);
    else if (key == "batch_size") cfg.batch_size = static_cast<int>(to_int(key, v));
    else if (key == "epochs") cfg.epochs = static_cast<int>(to_int(key, v));
    else if (key == "pretrain_regressor_epochs") cfg.pretrain_regressor_epochs = static_cast<int>(to_int(key, v));
    else if (key == "pretrain_encoder_epochs") cfg.pretrain_encoder_epochs = static_cast<int>(to_int(key, v));
    else if (key == "lambda_pixel") cfg.weights.pixel = to_double(key, v);
    else if (key == "lambda_identity") cfg.weights.identity = to_double(key, v);
    else if (key == "lambda_gan") cfg.weights.gan = to_double(key, v);
    else if (key == "lambda_regression") cfg.weights.regression = to_double(key, v);
    else if (key == "seed") {
        const auto s = to_int(key, v);
        require(s >= 0, "seed must be non-negative");
        cfg.seed = static_cast<std::uint64_t>(s);
    } else if (key == "g_loss_variant") cfg.g_loss_variant = parse_gan_variant(v);
    else if (key == "image_size") cfg.image_size = static_cast<int>(to_int(key, v));
    else if (key == "channels") cfg.channels = static_cast<int>(to_int(key, v));
    else if (key == "latent_dim") cfg.latent_dim = static_cast<int>(to_int(key, v));
    else if (key == "base_filters") cfg.base_filters = static_cast<int>(to_int(key, v));
    else if (key == "max_age") cfg.max_age = to_double(key, v);
    else if (key == "bin_width") cfg.bin_width = to_double(key, v);
    else if (key == "checkpoint_every") cfg.checkpoint_every = static_cast<int>(to_int(key, v));
    else if (key == "target_equals_input") cfg.target_equals_input = to_bool(key, v);
    else if (key == "identity_aux_weight") cfg.identity_aux_weight = to_double(key, v);
    else throw UserError("unknown config key '" + key + "'");
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        require(eq != std::string::npos, "config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        require(!key.empty(), "config line " + std::to_string(line_no) + ": empty key");
        out[key] = trim(line.substr(eq + 1));
    }
    return out;
}

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), "cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

TrainConfig resolve_config(const std::map<std::string, std::string>& file_values,
                           const std::map<std::string, std::string>& overrides, TrainConfig base) {
    // Presets apply first so explicit keys can refine them.
    for (const auto* layer : {&file_values, &overrides}) {
        if (auto it = layer->find("preset"); it != layer->end()) apply_setting(base, "preset", it->second);
        for (const auto& [k, v] : *layer)
            if (k != "preset") apply_setting(base, k, v);
    }
    return base;
}

} // namespace cmaae
