#include "cmaae/ordinal.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

#include "cmaae/error.hpp"

namespace cmaae {

int rank_count(double max_age, double bin_width) {
    require(bin_width > 0.0 && std::isfinite(bin_width), "bin_width must be positive");
    require(max_age > 0.0, "max_age must be positive");
    const double ratio = max_age / bin_width;
    const double rounded = std::round(ratio);
    require(rounded >= 1.0 && std::abs(ratio - rounded) < 1e-9, "bin_width must divide max_age");
    return static_cast<int>(rounded);
}

RankTargets rank_encode(double age, double max_age, double bin_width) {
    const int count = rank_count(max_age, bin_width);
    require(age >= 0.0 && age <= max_age, "age outside [0, max_age]");
    RankTargets t;
    t.bin_width = bin_width;
    t.bits.resize(count);
    for (int k = 0; k < count; ++k) t.bits[k] = age >= (k + 1) * bin_width ? 1 : 0;
    return t;
}

namespace {
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
} // namespace

double rank_decode_hard(std::span<const double> logits, double bin_width) {
    const auto positive = std::count_if(logits.begin(), logits.end(), [](double l) { return sigmoid(l) > 0.5; });
    return bin_width * static_cast<double>(positive);
}

std::vector<double> rank_decode_hard(const torch::Tensor& logits, double bin_width) {
    require(logits.dim() == 2, "rank_decode_hard expects [B, K-1] logits");
    auto cpu = logits.detach().to(torch::kCPU, torch::kFloat64).contiguous();
    const auto rows = cpu.size(0);
    const auto cols = cpu.size(1);
    std::vector<double> out(rows);
    const double* data = cpu.data_ptr<double>();
    for (std::int64_t r = 0; r < rows; ++r)
        out[r] = rank_decode_hard(std::span<const double>(data + r * cols, cols), bin_width);
    return out;
}

double soft_age(std::span<const double> logits) {
    require(!logits.empty(), "soft_age needs at least one logit");
    double sum = 0.0;
    for (double l : logits) sum += sigmoid(l);
    return sum / static_cast<double>(logits.size());
}

torch::Tensor soft_age(const torch::Tensor& logits) {
    require(logits.dim() == 2 && logits.size(1) >= 1, "soft_age expects [B, K-1] logits");
    return torch::sigmoid(logits).mean(1);
}

torch::Tensor rank_targets_tensor(std::span<const double> ages_years, double max_age, double bin_width) {
    const int count = rank_count(max_age, bin_width);
    auto out = torch::empty({static_cast<long>(ages_years.size()), count}, torch::kFloat32);
    float* p = out.data_ptr<float>();
    for (std::size_t i = 0; i < ages_years.size(); ++i) {
        auto t = rank_encode(ages_years[i], max_age, bin_width);
        for (int k = 0; k < count; ++k) p[i * count + k] = t.bits[k];
    }
    return out;
}

torch::Tensor rank_loss(const torch::Tensor& logits, const torch::Tensor& targets) {
    require(logits.sizes() == targets.sizes(), "rank_loss: logits and targets must have the same shape");
    return torch::binary_cross_entropy_with_logits(logits, targets.to(logits.dtype()));
}

std::string MaeReport::to_json() const {
    nlohmann::json j;
    j["dataset"] = dataset;
    j["n"] = n;
    j["mae_mean"] = mae_mean;
    j["mae_std"] = mae_std;
    nlohmann::json decades = nlohmann::json::object();
    for (const auto& [decade, mae] : per_decade_mae)
        decades[std::to_string(decade * 10) + "-" + std::to_string(decade * 10 + 9)] = mae;
    j["per_decade_mae"] = decades;
    return j.dump(2);
}

MaeReport summarize_mae(std::span<const double> predicted, std::span<const double> actual,
                        const std::string& dataset_name) {
    require(!actual.empty(), "MAE over an empty set is undefined");
    require(predicted.size() == actual.size(), "predicted/actual size mismatch");
    MaeReport r;
    r.dataset = dataset_name;
    r.n = actual.size();
    std::map<int, std::pair<double, int>> buckets;
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        const double err = std::abs(predicted[i] - actual[i]);
        sum += err;
        sum_sq += err * err;
        auto& b = buckets[static_cast<int>(std::floor(actual[i] / 10.0))];
        b.first += err;
        b.second += 1;
    }
    const double n = static_cast<double>(r.n);
    r.mae_mean = sum / n;
    r.mae_std = std::sqrt(std::max(0.0, sum_sq / n - r.mae_mean * r.mae_mean));
    for (const auto& [decade, b] : buckets) r.per_decade_mae[decade] = b.first / b.second;
    return r;
}

std::vector<double> predict_ages(Regressor& regressor, const Dataset& dataset, double bin_width, int batch_size) {
    require(!dataset.empty(), "cannot evaluate on an empty dataset");
    torch::NoGradGuard no_grad;
    const bool was_training = regressor->is_training();
    regressor->eval();
    std::vector<double> predicted;
    predicted.reserve(dataset.size());
    std::vector<const ImageTensor*> batch;
    for (std::size_t start = 0; start < dataset.size(); start += batch_size) {
        batch.clear();
        const std::size_t end = std::min(dataset.size(), start + static_cast<std::size_t>(batch_size));
        for (std::size_t i = start; i < end; ++i) batch.push_back(&dataset.items[i].image);
        auto logits = regressor->forward(to_batch(std::span<const ImageTensor* const>(batch)));
        auto years = rank_decode_hard(logits, bin_width);
        predicted.insert(predicted.end(), years.begin(), years.end());
    }
    regressor->train(was_training);
    return predicted;
}

MaeReport evaluate_mae(Regressor& regressor, const Dataset& dataset, double bin_width,
                       const std::string& dataset_name) {
    auto predicted = predict_ages(regressor, dataset, bin_width);
    std::vector<double> actual;
    actual.reserve(dataset.size());
    for (const auto& item : dataset.items) actual.push_back(item.age.years);
    return summarize_mae(predicted, actual, dataset_name);
}

} // namespace cmaae
