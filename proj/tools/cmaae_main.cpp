// cmaae: command-line front end for dataset generation, the three training
// phases, synthesis, evaluation, ablation and gradient checking.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <torch/torch.h>

#include "CLI11.hpp"

#include "cmaae/checkpoint.hpp"
#include "cmaae/config.hpp"
#include "cmaae/data.hpp"
#include "cmaae/error.hpp"
#include "cmaae/eval.hpp"
#include "cmaae/gradcheck.hpp"
#include "cmaae/synthetic.hpp"
#include "cmaae/training.hpp"

namespace fs = std::filesystem;
using namespace cmaae;

namespace {

std::string dashed(std::string key) {
    for (auto& c : key)
        if (c == '_') c = '-';
    return key;
}

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw UserError("not a number in list: '" + item + "'");
        }
    }
    return out;
}

std::uint64_t pick_seed(const std::optional<std::uint64_t>& given) {
    if (given) return *given;
    std::random_device rd;
    const std::uint64_t seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    std::cout << "seed=" << seed << " (none given; pass --seed " << seed << " to reproduce)\n";
    return seed;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
    if (!text.empty() && text.back() != '\n') out << '\n';
    require(static_cast<bool>(out), "cannot write " + path.string());
}

/// Training-configuration flags shared by the training subcommands: one
/// `--<key>` per TrainConfig field plus `--config` and `--preset`.
struct ConfigFlags {
    std::string config_path;
    std::map<std::string, std::string> values;
    std::map<std::string, std::string*> slots;
    std::vector<std::string> storage;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "flat key = value config file (CLI flags take precedence)");
        storage.resize(config_keys().size() + 1);
        std::size_t i = 0;
        for (const auto& key : config_keys()) {
            cmd->add_option("--" + dashed(key), storage[i], "override " + key);
            slots[key] = &storage[i++];
        }
        cmd->add_option("--preset", storage[i], "desk | morph | utkface");
        slots["preset"] = &storage[i];
    }

    /// Resolves defaults < file < flags. Seed is chosen (and printed) when absent.
    TrainConfig resolve(CLI::App* cmd) {
        std::map<std::string, std::string> file;
        if (!config_path.empty()) file = read_config_file(config_path);
        for (const auto& [key, slot] : slots)
            if (cmd->count("--" + dashed(key)) > 0) values[key] = *slot;
        TrainConfig cfg = resolve_config(file, values);
        const bool seeded = values.count("seed") || file.count("seed");
        if (!seeded) cfg.seed = pick_seed(std::nullopt);
        cfg.validate();
        return cfg;
    }

    /// Overrides applied on top of a checkpoint's stored config.
    std::map<std::string, std::string> explicit_values(CLI::App* cmd) {
        std::map<std::string, std::string> out;
        if (!config_path.empty()) out = read_config_file(config_path);
        for (const auto& [key, slot] : slots)
            if (cmd->count("--" + dashed(key)) > 0) out[key] = *slot;
        return out;
    }
};

TrainState state_from(const std::string& checkpoint, ConfigFlags& flags, CLI::App* cmd) {
    if (checkpoint.empty()) return TrainState(flags.resolve(cmd));
    TrainState state = load_checkpoint(checkpoint);
    const NetworkSpec before = state.spec;
    TrainConfig cfg = state.config;
    for (const auto& [k, v] : flags.explicit_values(cmd)) apply_setting(cfg, k, v);
    cfg.validate();
    require(cfg.network_spec() == before, "architecture settings cannot change when continuing from a checkpoint");
    const bool optimizer_changed =
        cfg.learning_rate != state.config.learning_rate || cfg.weight_decay != state.config.weight_decay;
    state.config = cfg;
    if (optimizer_changed) state.reset_optimizers();
    return state;
}

struct DataFlags {
    std::string root;
    std::string split = "train";
    std::string eval_split;

    void attach(CLI::App* cmd, bool with_eval) {
        cmd->add_option("--data", root, "dataset root containing <split>/ folders")->required();
        cmd->add_option("--split", split, "training split folder");
        if (with_eval) cmd->add_option("--eval-split", eval_split, "held-out split used for reported metrics");
    }
};

int run(int argc, char** argv) {
    CLI::App app{"Conditional multi-adversarial autoencoder with ordinal regression for face aging"};
    app.require_subcommand(1);
    app.fallthrough(false);

    // gen-synthetic
    auto* gen = app.add_subcommand("gen-synthetic", "render a procedural face dataset with analytic age/identity");
    std::string gen_out;
    SynthConfig synth;
    int test_identities = 0;
    std::optional<std::uint64_t> gen_seed;
    gen->add_option("--out", gen_out, "output dataset root")->required();
    gen->add_option("--n-identities", synth.n_identities, "identities in the train split");
    gen->add_option("--images-per-identity", synth.images_per_identity, "images per identity");
    gen->add_option("--image-size", synth.image_size, "square image size (>= 32, power of two)");
    gen->add_option("--max-age", synth.max_age, "maximum age in years");
    gen->add_option("--test-identities", test_identities, "additional held-out identities written to test/");
    gen->add_option("--seed", gen_seed, "generator seed");

    // pretrain-age
    auto* pre_r = app.add_subcommand("pretrain-age", "phase 1: train the ordinal age regressor R");
    ConfigFlags pre_r_cfg;
    DataFlags pre_r_data;
    std::string pre_r_out;
    pre_r_cfg.attach(pre_r);
    pre_r_data.attach(pre_r, true);
    pre_r->add_option("--out", pre_r_out, "checkpoint directory to write")->required();

    // pretrain-encoder
    auto* pre_e = app.add_subcommand("pretrain-encoder", "phase 2: pre-train E and freeze a copy as E_pre");
    ConfigFlags pre_e_cfg;
    DataFlags pre_e_data;
    std::string pre_e_out;
    std::string pre_e_ckpt;
    pre_e_cfg.attach(pre_e);
    pre_e_data.attach(pre_e, true);
    pre_e->add_option("--out", pre_e_out, "checkpoint directory to write")->required();
    pre_e->add_option("--checkpoint", pre_e_ckpt, "continue from this checkpoint (e.g. after pretrain-age)");

    // train
    auto* tr = app.add_subcommand("train", "run the remaining phases and the alternating D/G training");
    ConfigFlags tr_cfg;
    DataFlags tr_data;
    std::string tr_out;
    std::string tr_ckpt;
    tr_cfg.attach(tr);
    tr_data.attach(tr, true);
    tr->add_option("--out", tr_out, "run directory (train_log.csv, checkpoints/, final/)")->required();
    tr->add_option("--checkpoint", tr_ckpt, "start or resume from this checkpoint");

    // synthesize
    auto* syn = app.add_subcommand("synthesize", "age sweep montage for one or more faces");
    std::string syn_ckpt;
    std::vector<std::string> syn_images;
    std::string syn_ages;
    std::string syn_out;
    syn->add_option("--checkpoint", syn_ckpt, "trained checkpoint")->required();
    syn->add_option("--image", syn_images, "input face PNG (repeatable)")->required();
    syn->add_option("--ages", syn_ages, "comma-separated target ages in years")->required();
    syn->add_option("--out", syn_out, "output directory")->required();

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "aging accuracy, identity and regressor MAE reports");
    std::string ev_ckpt;
    DataFlags ev_data;
    std::string ev_out;
    int ev_ages = 4;
    bool ev_oracle = false;
    std::optional<std::uint64_t> ev_seed;
    ev->add_option("--checkpoint", ev_ckpt, "trained checkpoint")->required();
    ev_data.attach(ev, false);
    ev->add_option("--out", ev_out, "output directory")->required();
    ev->add_option("--ages-per-item", ev_ages, "target ages sampled per item");
    ev->add_flag("--oracle", ev_oracle, "score with the synthetic age oracle (synthetic data only)");
    ev->add_option("--seed", ev_seed, "target-age sampling seed");

    // ablate
    auto* ab = app.add_subcommand("ablate", "paired trainings with and without the regression loss");
    ConfigFlags ab_cfg;
    DataFlags ab_data;
    std::string ab_out;
    std::string ab_seeds = "0,1,2";
    std::string ab_test_split = "test";
    int ab_ages = 4;
    bool ab_identity_arm = false;
    ab_cfg.attach(ab);
    ab_data.attach(ab, false);
    ab->add_option("--test-split", ab_test_split, "held-out synthetic split");
    ab->add_option("--out", ab_out, "output directory")->required();
    ab->add_option("--seeds", ab_seeds, "comma-separated training seeds");
    ab->add_option("--ages-per-item", ab_ages, "target ages sampled per test item");
    ab->add_flag("--identity-arm", ab_identity_arm, "also train an arm without the identity loss");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every loss gradient");
    GradcheckOptions gc_opts;
    std::optional<std::uint64_t> gc_seed;
    std::string gc_out;
    gc->add_option("--seed", gc_seed, "seed for inputs and sampled coordinates");
    gc->add_option("--coordinates", gc_opts.coordinates, "coordinates sampled per loss")->check(CLI::Range(50, 100000));
    gc->add_option("--out", gc_out, "optional directory for gradcheck.txt");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        app.exit(e);
        return 0;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    if (gen->parsed()) {
        synth.seed = pick_seed(gen_seed);
        Dataset train = gen_synthetic_dataset(synth);
        export_dataset(train, gen_out, "train");
        std::cout << "wrote " << train.size() << " items to " << (fs::path(gen_out) / "train").string() << '\n';
        if (test_identities > 0) {
            SynthConfig held = synth;
            held.first_identity = synth.first_identity + synth.n_identities;
            held.n_identities = test_identities;
            Dataset test = gen_synthetic_dataset(held);
            export_dataset(test, gen_out, "test");
            std::cout << "wrote " << test.size() << " items to " << (fs::path(gen_out) / "test").string() << '\n';
        }
        return 0;
    }

    auto load_split = [](const DataFlags& d, const TrainConfig& cfg, const std::string& split) {
        return load_dataset(d.root, split, cfg.image_size, cfg.max_age);
    };

    if (pre_r->parsed()) {
        TrainState state(pre_r_cfg.resolve(pre_r));
        Dataset train = load_split(pre_r_data, state.config, pre_r_data.split);
        std::optional<Dataset> held;
        if (!pre_r_data.eval_split.empty()) held = load_split(pre_r_data, state.config, pre_r_data.eval_split);
        auto report = pretrain_regressor(state, train, held ? &*held : nullptr);
        save_checkpoint(state, pre_r_out, {{"regressor_mae", report.mae->mae_mean}});
        write_text(fs::path(pre_r_out) / "mae.json", report.mae->to_json());
        std::cout << report.mae->to_json() << '\n';
        return 0;
    }

    if (pre_e->parsed()) {
        TrainState state = state_from(pre_e_ckpt, pre_e_cfg, pre_e);
        Dataset train = load_split(pre_e_data, state.config, pre_e_data.split);
        std::optional<Dataset> held;
        if (!pre_e_data.eval_split.empty()) held = load_split(pre_e_data, state.config, pre_e_data.eval_split);
        auto report = pretrain_encoder(state, train, held ? &*held : nullptr);
        save_checkpoint(state, pre_e_out, {{"reconstruction_psnr_db", report.psnr_db}});
        std::cout << "reconstruction PSNR " << report.psnr_db << " dB\n";
        return 0;
    }

    if (tr->parsed()) {
        TrainState state = state_from(tr_ckpt, tr_cfg, tr);
        Dataset train_set = load_split(tr_data, state.config, tr_data.split);
        std::optional<Dataset> held;
        if (!tr_data.eval_split.empty()) held = load_split(tr_data, state.config, tr_data.eval_split);
        TrainOptions opts;
        opts.out_dir = tr_out;
        opts.eval = held ? &*held : nullptr;
        train(state, train_set, opts);
        std::cout << "final checkpoint: " << (fs::path(tr_out) / "final").string() << '\n';
        return 0;
    }

    if (syn->parsed()) {
        TrainState state = load_checkpoint(syn_ckpt);
        std::vector<ImageTensor> sources;
        std::vector<std::string> names;
        for (const auto& path : syn_images) {
            ImageTensor img = preprocess_image(read_png(path), state.config.image_size);
            require(img.channels() == state.config.channels, "input channel count does not match the model: " + path);
            sources.push_back(std::move(img));
            names.push_back(fs::path(path).filename().string());
        }
        SweepGrid grid = synthesize_sweep(make_synthesizer(state), sources, parse_list(syn_ages), state.config.max_age);
        grid.source_names = names;
        fs::create_directories(syn_out);
        write_sweep(grid, fs::path(syn_out) / "sweep.png", fs::path(syn_out) / "sweep.json");
        std::cout << "wrote " << (fs::path(syn_out) / "sweep.png").string() << '\n';
        return 0;
    }

    if (ev->parsed()) {
        TrainState state = load_checkpoint(ev_ckpt);
        Dataset ds = load_split(ev_data, state.config, ev_data.split);
        const std::uint64_t seed = pick_seed(ev_seed);
        EvalReport report = evaluate_aging_accuracy(eval_models(state), ds, ev_ages, ev_oracle, seed);
        fs::create_directories(ev_out);
        write_text(fs::path(ev_out) / "eval_report.json", report.to_json());
        if (state.regressor_ready) {
            MaeReport mae = evaluate_mae(state.regressor, ds, state.config.bin_width, ev_data.split);
            write_text(fs::path(ev_out) / "mae.json", mae.to_json());
        }
        std::cout << report.to_json() << '\n';
        return 0;
    }

    if (ab->parsed()) {
        TrainConfig cfg = ab_cfg.resolve(ab);
        Dataset train_set = load_split(ab_data, cfg, ab_data.split);
        Dataset test_set = load_split(ab_data, cfg, ab_test_split);
        AblationOptions opts;
        opts.seeds.clear();
        for (double s : parse_list(ab_seeds)) opts.seeds.push_back(static_cast<std::uint64_t>(s));
        require(!opts.seeds.empty(), "--seeds must list at least one seed");
        opts.ages_per_item = ab_ages;
        opts.out_dir = fs::path(ab_out) / "runs";
        fs::create_directories(ab_out);

        std::vector<AblationArm> arms{{"with_R", cfg.weights}, {"without_R", cfg.weights}};
        arms[1].weights.regression = 0.0;
        if (ab_identity_arm) {
            arms.push_back({"without_identity", cfg.weights});
            arms[2].weights.identity = 0.0;
        }
        AblationResult result = run_ablation(cfg, train_set, test_set, arms, opts);
        RAblation summary;
        summary.mae_with = result.arm("with_R").mean_oracle_mae;
        summary.mae_without = result.arm("without_R").mean_oracle_mae;
        summary.ratio = summary.mae_without / std::max(summary.mae_with, 1e-12);
        summary.pass = summary.mae_with < 0.6 * summary.mae_without;
        write_text(fs::path(ab_out) / "ablation.json", result.to_json());
        write_text(fs::path(ab_out) / "summary.txt", summary.summary_line());
        std::cout << summary.summary_line() << '\n';
        return 0;
    }

    if (gc->parsed()) {
        gc_opts.seed = gc_seed.value_or(0);
        GradcheckReport report = run_gradcheck(gc_opts);
        std::cout << report.to_text();
        if (!gc_out.empty()) {
            fs::create_directories(gc_out);
            write_text(fs::path(gc_out) / "gradcheck.txt", report.to_text());
        }
        std::cout << (report.pass() ? "gradcheck passed" : "gradcheck FAILED") << '\n';
        return report.pass() ? 0 : 1;
    }
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    torch::set_num_threads(static_cast<int>(std::max(1u, std::thread::hardware_concurrency())));
    try {
        return run(argc, argv);
    } catch (const UserError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const DivergenceError& e) {
        std::cerr << "diverged: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 2;
    }
}
