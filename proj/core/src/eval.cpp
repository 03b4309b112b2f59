#include "cmaae/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "cmaae/log.hpp"

#include "json.hpp"

#include "cmaae/error.hpp"
#include "cmaae/ordinal.hpp"
#include "cmaae/synthetic.hpp"

using nlohmann::json;

namespace cmaae {

namespace {

constexpr int kEvalBatch = 256;
constexpr int kMontagePad = 2;

json stat_json(const std::optional<Stat>& s) {
    if (!s) return nullptr;
    return json{{"mean", s->mean}, {"std", s->std}, {"n", s->n}};
}

void check_generated(const torch::Tensor& x_hat, const torch::Tensor& x) {
    expect(x_hat.sizes() == x.sizes(), "synthesizer changed the image shape");
    auto bounds = torch::stack({x_hat.min(), x_hat.max()}).to(torch::kFloat64);
    expect(bounds[0].item<double>() >= 0.0 && bounds[1].item<double>() <= 1.0,
           "synthesizer produced values outside [0, 1]");
}

struct Samples {
    std::vector<double> oracle_err;
    std::vector<double> regressor_err;
    std::vector<double> identity_oracle;
    std::vector<double> identity_latent;
};

Samples run_samples(const EvalModels& models, const Dataset& dataset, int ages_per_item, bool synthetic,
                    std::uint64_t seed, TargetAges mode) {
    require(!dataset.empty(), "evaluation dataset is empty");
    require(ages_per_item >= 1, "ages_per_item must be >= 1");
    require(static_cast<bool>(models.synthesize), "no synthesizer given");

    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0xe7a1u};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> dist(0.0, models.max_age);

    std::vector<std::size_t> source;
    std::vector<double> target;
    for (std::size_t i = 0; i < dataset.size(); ++i)
        for (int k = 0; k < ages_per_item; ++k) {
            source.push_back(i);
            const double sampled = dist(rng);
            target.push_back(mode == TargetAges::Input ? dataset.items[i].age.years : sampled);
        }

    torch::NoGradGuard no_grad;
    Samples s;
    std::vector<const ImageTensor*> batch;
    std::vector<double> norm;
    for (std::size_t start = 0; start < source.size(); start += kEvalBatch) {
        const std::size_t end = std::min(source.size(), start + kEvalBatch);
        batch.clear();
        norm.clear();
        for (std::size_t j = start; j < end; ++j) {
            batch.push_back(&dataset.items[source[j]].image);
            norm.push_back(target[j] / models.max_age);
        }
        auto x = to_batch(std::span<const ImageTensor* const>(batch));
        auto x_hat = models.synthesize(x, torch::tensor(norm, torch::kFloat64).to(torch::kFloat32));
        check_generated(x_hat, x);

        if (synthetic) {
            auto images = from_batch(x_hat);
            for (std::size_t j = start; j < end; ++j) {
                const auto& img = images[j - start];
                s.oracle_err.push_back(std::abs(oracle_age(img, models.max_age) - target[j]));
                s.identity_oracle.push_back(oracle_identity_distance(img, dataset.items[source[j]].image));
            }
        }
        if (models.regressor) {
            auto predicted = rank_decode_hard((*models.regressor)->forward(x_hat), models.bin_width);
            for (std::size_t j = start; j < end; ++j) s.regressor_err.push_back(std::abs(predicted[j - start] - target[j]));
        }
        if (models.identity_encoder) {
            auto& enc = *models.identity_encoder;
            auto dist_latent = (enc->forward(x_hat) - enc->forward(x)).pow(2).sum(1).sqrt().to(torch::kFloat64);
            const double* p = dist_latent.data_ptr<double>();
            s.identity_latent.insert(s.identity_latent.end(), p, p + dist_latent.numel());
        }
    }
    return s;
}

} // namespace

Synthesizer make_synthesizer(TrainState& state) {
    return [&state](const torch::Tensor& x, const torch::Tensor& ages) {
        torch::NoGradGuard no_grad;
        state.encoder->eval();
        state.generator->eval();
        return state.generator->forward(state.encoder->forward(x), ages);
    };
}

EvalModels eval_models(TrainState& state) {
    EvalModels m;
    m.synthesize = make_synthesizer(state);
    m.regressor = state.regressor_ready ? &state.regressor : nullptr;
    m.identity_encoder = state.encoder_ready ? &state.encoder_pre : nullptr;
    m.max_age = state.config.max_age;
    m.bin_width = state.config.bin_width;
    return m;
}

SweepGrid synthesize_sweep(const Synthesizer& synthesize, const std::vector<ImageTensor>& sources,
                           std::vector<double> target_ages, double max_age) {
    require(!target_ages.empty(), "synthesize_sweep: at least one target age is required");
    require(!sources.empty(), "synthesize_sweep: at least one source image is required");
    for (double a : target_ages)
        require(std::isfinite(a) && a >= 0.0 && a <= max_age,
                "target age " + std::to_string(a) + " outside [0, " + std::to_string(max_age) + "]");
    std::sort(target_ages.begin(), target_ages.end());

    SweepGrid grid;
    grid.sources = sources;
    grid.ages = target_ages;
    std::vector<double> norm;
    for (double a : target_ages) norm.push_back(a / max_age);
    const auto ages_t = torch::tensor(norm, torch::kFloat64).to(torch::kFloat32);
    for (const auto& src : sources) {
        require(src.same_shape(sources.front()), "sweep sources must share dimensions");
        std::vector<const ImageTensor*> repeated(target_ages.size(), &src);
        auto x = to_batch(std::span<const ImageTensor* const>(repeated));
        auto x_hat = synthesize(x, ages_t);
        check_generated(x_hat, x);
        grid.cells.push_back(from_batch(x_hat));
    }
    return grid;
}

void write_sweep(const SweepGrid& grid, const std::filesystem::path& png_path,
                 const std::filesystem::path& json_path) {
    require(!grid.sources.empty(), "empty sweep grid");
    const int s_h = grid.sources.front().height();
    const int s_w = grid.sources.front().width();
    const int ch = grid.sources.front().channels();
    const int rows = static_cast<int>(grid.sources.size());
    const int cols = static_cast<int>(grid.ages.size()) + 1;

    ImageTensor montage(rows * s_h + (rows + 1) * kMontagePad, cols * s_w + (cols + 1) * kMontagePad, ch, 0.0);
    auto blit = [&](const ImageTensor& img, int r, int c) {
        const int y0 = kMontagePad + r * (s_h + kMontagePad);
        const int x0 = kMontagePad + c * (s_w + kMontagePad);
        for (int y = 0; y < s_h; ++y)
            for (int x = 0; x < s_w; ++x)
                for (int k = 0; k < ch; ++k) montage.at(y0 + y, x0 + x, k) = img.at(y, x, k);
    };
    for (int r = 0; r < rows; ++r) {
        blit(grid.sources[r], r, 0);
        for (int c = 1; c < cols; ++c) blit(grid.cells[r][c - 1], r, c);
    }
    if (png_path.has_parent_path()) std::filesystem::create_directories(png_path.parent_path());
    write_png(png_path, quantize(montage));

    json j;
    j["montage"] = png_path.filename().string();
    j["rows"] = rows;
    j["cols"] = cols;
    j["layout"] = "row per source; column 0 is the source, then ascending target ages";
    j["ages"] = grid.ages;
    j["sources"] = grid.source_names.empty() ? json::array() : json(grid.source_names);
    j["cell"] = {{"width", s_w}, {"height", s_h}, {"padding", kMontagePad}};
    json cells = json::array();
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            cells.push_back({{"row", r},
                             {"col", c},
                             {"x", kMontagePad + c * (s_w + kMontagePad)},
                             {"y", kMontagePad + r * (s_h + kMontagePad)},
                             {"age", c == 0 ? json(nullptr) : json(grid.ages[c - 1])}});
    j["cells"] = cells;
    std::ofstream out(json_path);
    out << j.dump(2) << '\n';
    require(static_cast<bool>(out), "cannot write " + json_path.string());
}

Stat summarize(const std::vector<double>& values) {
    Stat s;
    s.n = values.size();
    if (values.empty()) return s;
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / values.size();
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(sq / values.size());
    return s;
}

std::string EvalReport::to_json() const {
    json j;
    j["n"] = n;
    j["seeds"] = seeds;
    j["aging_mae_oracle_years"] = stat_json(oracle_mae);
    j["aging_mae_regressor_years"] = stat_json(regressor_mae);
    j["identity_distance_oracle"] = stat_json(identity_oracle);
    j["identity_distance_latent"] = stat_json(identity_latent);
    return j.dump(2);
}

EvalReport evaluate_aging_accuracy(const EvalModels& models, const Dataset& dataset, int ages_per_item,
                                   bool use_oracle, std::uint64_t seed, TargetAges mode) {
    if (use_oracle)
        require(dataset.provenance == Provenance::Synthetic,
                "the age oracle is only defined on synthetic data");
    const bool synthetic = use_oracle;
    Samples s = run_samples(models, dataset, ages_per_item, synthetic, seed, mode);
    EvalReport r;
    r.n = s.oracle_err.empty() ? s.regressor_err.size() : s.oracle_err.size();
    r.seeds = {seed};
    if (synthetic) {
        r.oracle_mae = summarize(s.oracle_err);
        r.identity_oracle = summarize(s.identity_oracle);
    }
    if (!s.regressor_err.empty()) r.regressor_mae = summarize(s.regressor_err);
    if (!s.identity_latent.empty()) r.identity_latent = summarize(s.identity_latent);
    if (r.n == 0) r.n = s.identity_latent.size();
    return r;
}

IdentityStats evaluate_identity(const EvalModels& models, const Dataset& dataset, int ages_per_item,
                                std::uint64_t seed) {
    require(models.identity_encoder != nullptr, "identity evaluation needs the frozen identity encoder");
    const bool synthetic = dataset.provenance == Provenance::Synthetic;
    Samples s = run_samples(models, dataset, ages_per_item, synthetic, seed, TargetAges::Uniform);
    IdentityStats out;
    out.latent = summarize(s.identity_latent);
    if (synthetic) out.oracle = summarize(s.identity_oracle);
    return out;
}

const AblationArmResult& AblationResult::arm(const std::string& name) const {
    for (const auto& a : arms)
        if (a.name == name) return a;
    throw UserError("no ablation arm named '" + name + "'");
}

std::string AblationResult::to_json() const {
    json j;
    j["seeds"] = seeds;
    json arr = json::array();
    for (const auto& a : arms) {
        json per_seed = json::array();
        for (const auto& r : a.per_seed) per_seed.push_back(json::parse(r.to_json()));
        arr.push_back({{"name", a.name},
                       {"mean_oracle_mae_years", a.mean_oracle_mae},
                       {"std_oracle_mae_years_over_seeds", a.std_oracle_mae},
                       {"mean_identity_distance_oracle", a.mean_identity_oracle},
                       {"std_identity_distance_oracle_over_seeds", a.std_identity_oracle},
                       {"per_seed", per_seed}});
    }
    j["arms"] = arr;
    return j.dump(2);
}

AblationResult run_ablation(const TrainConfig& config, const Dataset& train_set, const Dataset& test,
                            const std::vector<AblationArm>& arms, const AblationOptions& options) {
    require(!arms.empty(), "ablation needs at least one arm");
    require(!options.seeds.empty(), "ablation needs at least one seed");
    require(test.provenance == Provenance::Synthetic, "ablation is refereed by the oracle: synthetic test data required");

    AblationResult result;
    result.seeds = options.seeds;
    for (const auto& arm : arms) result.arms.push_back(AblationArmResult{arm.name, {}, 0.0, 0.0});

    for (auto seed : options.seeds) {
        TrainConfig cfg = config;
        cfg.seed = seed;
        TrainState base(cfg);
        pretrain_regressor(base, train_set, &test);
        pretrain_encoder(base, train_set, &test);

        for (std::size_t a = 0; a < arms.size(); ++a) {
            log_info("ablation arm '%s' seed %llu", arms[a].name.c_str(), static_cast<unsigned long long>(seed));
            TrainState state = clone_state(base);
            state.config.weights = arms[a].weights;
            TrainOptions topts;
            if (!options.out_dir.empty())
                topts.out_dir = options.out_dir / (arms[a].name + "_seed" + std::to_string(seed));
            train(state, train_set, topts);
            const std::uint64_t r_digest = params_digest(*state.regressor);
            EvalReport report = evaluate_aging_accuracy(eval_models(state), test, options.ages_per_item, true, seed);
            expect(params_digest(*state.regressor) == r_digest, "evaluation modified the regressor");
            log_info("arm '%s' seed %llu: oracle MAE %.3f years, identity distance %.5f", arms[a].name.c_str(),
                     static_cast<unsigned long long>(seed), report.oracle_mae->mean, report.identity_oracle->mean);
            result.arms[a].per_seed.push_back(std::move(report));
        }
    }
    auto mean_std = [](const std::vector<double>& v, double& mean, double& sd) {
        mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
        double sq = 0.0;
        for (double x : v) sq += (x - mean) * (x - mean);
        sd = v.size() > 1 ? std::sqrt(sq / (v.size() - 1)) : 0.0;
    };
    for (auto& arm : result.arms) {
        std::vector<double> mae, ident;
        for (const auto& r : arm.per_seed) {
            mae.push_back(r.oracle_mae->mean);
            ident.push_back(r.identity_oracle->mean);
        }
        mean_std(mae, arm.mean_oracle_mae, arm.std_oracle_mae);
        mean_std(ident, arm.mean_identity_oracle, arm.std_identity_oracle);
    }
    return result;
}

std::string RAblation::summary_line() const {
    return "ratio=" + std::to_string(ratio) + " pass=" + (pass ? "true" : "false");
}

RAblation ablation_with_without_R(const TrainConfig& config, const Dataset& train, const Dataset& test,
                                  const AblationOptions& options) {
    LossWeights without = config.weights;
    without.regression = 0.0;
    RAblation out;
    out.result = run_ablation(config, train, test, {{"with_R", config.weights}, {"without_R", without}}, options);
    out.mae_with = out.result.arm("with_R").mean_oracle_mae;
    out.mae_without = out.result.arm("without_R").mean_oracle_mae;
    out.ratio = out.mae_without / std::max(out.mae_with, 1e-12);
    out.pass = out.mae_with < 0.6 * out.mae_without;
    return out;
}

} // namespace cmaae
