#include "cmaae/checkpoint.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

#include "cmaae/error.hpp"
#include "cmaae/params_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cmaae {

namespace {

constexpr const char* kFormat = "cmaae-checkpoint-1";

std::string hex(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

std::uint64_t unhex(const std::string& s) {
    return std::stoull(s, nullptr, 16);
}

std::uint64_t fnv(const std::string& text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

json spec_json(const NetworkSpec& spec) {
    return json{{"image_size", spec.image_size}, {"channels", spec.channels},   {"latent_dim", spec.latent_dim},
                {"base_filters", spec.base_filters}, {"rank_count", spec.rank_count}, {"n_down", spec.n_down()},
                {"fingerprint", hex(spec.fingerprint())}};
}

template <typename Holder>
void save_net(const Holder& net, const NetworkSpec& spec, const fs::path& file) {
    write_params(file, extract_params(*net, spec));
}

template <typename Holder>
void load_net(Holder& net, const NetworkSpec& spec, const fs::path& file) {
    apply_params(read_params(file), *net, spec);
}

void save_optimizer(const torch::optim::Optimizer& opt, const fs::path& file) {
    torch::serialize::OutputArchive archive;
    opt.save(archive);
    archive.save_to(file.string());
}

void load_optimizer(torch::optim::Optimizer& opt, const fs::path& file) {
    torch::serialize::InputArchive archive;
    archive.load_from(file.string());
    opt.load(archive);
}

json parse_manifest(const fs::path& path) {
    std::ifstream in(path / "manifest.json");
    require(static_cast<bool>(in), "no manifest.json in checkpoint " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw UserError("malformed manifest in " + path.string() + ": " + e.what());
    }
    require(j.value("format", "") == kFormat, "unsupported checkpoint format in " + path.string());
    return j;
}

} // namespace

void save_checkpoint(const TrainState& state, const fs::path& path, const std::map<std::string, double>& metrics) {
    fs::path tmp = path;
    tmp += ".tmp";
    fs::remove_all(tmp);
    fs::create_directories(tmp);

    json config = json::object();
    for (const auto& [k, v] : state.config.to_kv()) config[k] = v;
    json metric_obj = json::object();
    for (const auto& [k, v] : metrics) metric_obj[k] = v;
    std::ostringstream rng_text;
    rng_text << state.rng;

    json manifest;
    manifest["format"] = kFormat;
    manifest["spec"] = spec_json(state.spec);
    manifest["config"] = config;
    manifest["loss_weights"] = {{"pixel", state.config.weights.pixel},
                                {"identity", state.config.weights.identity},
                                {"gan", state.config.weights.gan},
                                {"regression", state.config.weights.regression}};
    manifest["phase"] = {{"regressor_ready", state.regressor_ready}, {"encoder_ready", state.encoder_ready}};
    manifest["epoch"] = state.epoch;
    manifest["iteration"] = state.iteration;
    manifest["rng_state"] = rng_text.str();
    manifest["param_digests"] = {{"E", hex(params_digest(*state.encoder))},
                                 {"G", hex(params_digest(*state.generator))},
                                 {"D", hex(params_digest(*state.discriminator))},
                                 {"E_pre", hex(params_digest(*state.encoder_pre))},
                                 {"R", hex(params_digest(*state.regressor))}};
    manifest["frozen_digests"] = {{"E_pre", hex(state.encoder_pre_digest)}, {"R", hex(state.regressor_digest)}};
    manifest["metrics"] = metric_obj;
    manifest["metrics_digest"] = hex(fnv(metric_obj.dump()));

    save_net(state.encoder, state.spec, tmp / "E.bin");
    save_net(state.generator, state.spec, tmp / "G.bin");
    save_net(state.discriminator, state.spec, tmp / "D.bin");
    save_net(state.encoder_pre, state.spec, tmp / "E_pre.bin");
    save_net(state.regressor, state.spec, tmp / "R.bin");
    save_optimizer(*state.opt_generator, tmp / "opt_generator.pt");
    save_optimizer(*state.opt_discriminator, tmp / "opt_discriminator.pt");
    {
        std::ofstream out(tmp / "manifest.json");
        out << manifest.dump(2) << '\n';
        if (!out) throw UserError("cannot write manifest in " + tmp.string());
    }

    if (fs::exists(path)) fs::remove_all(path);
    fs::rename(tmp, path);
}

TrainState load_checkpoint(const fs::path& path, const std::optional<NetworkSpec>& expected) {
    const json manifest = parse_manifest(path);

    TrainConfig cfg;
    for (const auto& [k, v] : manifest.at("config").items()) apply_setting(cfg, k, v.get<std::string>());
    const NetworkSpec spec = cfg.network_spec();
    const std::uint64_t stored = unhex(manifest.at("spec").at("fingerprint").get<std::string>());
    require(stored == spec.fingerprint(), "checkpoint manifest is inconsistent: spec fingerprint mismatch");
    if (expected)
        require(expected->fingerprint() == stored,
                "network spec fingerprint mismatch: checkpoint has " + spec.to_string() + ", expected " +
                    expected->to_string());

    TrainState state(cfg);
    load_net(state.encoder, spec, path / "E.bin");
    load_net(state.generator, spec, path / "G.bin");
    load_net(state.discriminator, spec, path / "D.bin");
    load_net(state.encoder_pre, spec, path / "E_pre.bin");
    load_net(state.regressor, spec, path / "R.bin");

    state.regressor_ready = manifest.at("phase").at("regressor_ready").get<bool>();
    state.encoder_ready = manifest.at("phase").at("encoder_ready").get<bool>();
    state.epoch = manifest.at("epoch").get<int>();
    state.iteration = manifest.at("iteration").get<std::int64_t>();
    std::istringstream rng_text(manifest.at("rng_state").get<std::string>());
    rng_text >> state.rng;
    state.encoder_pre_digest = unhex(manifest.at("frozen_digests").at("E_pre").get<std::string>());
    state.regressor_digest = unhex(manifest.at("frozen_digests").at("R").get<std::string>());

    if (state.regressor_ready) {
        set_requires_grad(*state.regressor, false);
        state.regressor->eval();
    }
    if (state.encoder_ready) {
        set_requires_grad(*state.encoder_pre, false);
        state.encoder_pre->eval();
    }
    state.check_frozen();

    if (fs::exists(path / "opt_generator.pt")) load_optimizer(*state.opt_generator, path / "opt_generator.pt");
    if (fs::exists(path / "opt_discriminator.pt"))
        load_optimizer(*state.opt_discriminator, path / "opt_discriminator.pt");
    return state;
}

std::string read_manifest(const fs::path& path) {
    return parse_manifest(path).dump(2);
}

std::map<std::string, double> read_metrics(const fs::path& path) {
    std::map<std::string, double> out;
    const json manifest = parse_manifest(path);
    for (const auto& [k, v] : manifest.at("metrics").items()) out[k] = v.get<double>();
    return out;
}

} // namespace cmaae
