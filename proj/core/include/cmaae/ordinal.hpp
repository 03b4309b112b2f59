#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "cmaae/data.hpp"
#include "cmaae/networks.hpp"

namespace cmaae {

/// K-1 binary "age has reached boundary k" targets. Bit k (0-based) is set
/// iff age >= (k + 1) * bin_width, so the bits are monotone non-increasing.
struct RankTargets {
    std::vector<std::uint8_t> bits;
    double bin_width = 1.0;
};

/// K-1 = max_age / bin_width; throws unless bin_width divides max_age.
int rank_count(double max_age, double bin_width);

RankTargets rank_encode(double age, double max_age, double bin_width);

/// bin_width * |{k : sigmoid(logit_k) > 0.5}|.
double rank_decode_hard(std::span<const double> logits, double bin_width);
/// Row-wise hard decode of a [B, K-1] logit tensor, in years.
std::vector<double> rank_decode_hard(const torch::Tensor& logits, double bin_width);

/// Differentiable age in [0, 1]: mean of the task sigmoids.
double soft_age(std::span<const double> logits);
/// Row-wise soft decode of a [B, K-1] tensor; keeps the autograd graph.
torch::Tensor soft_age(const torch::Tensor& logits);

/// Stacks rank_encode for every age into a float [B, K-1] tensor.
torch::Tensor rank_targets_tensor(std::span<const double> ages_years, double max_age, double bin_width);

/// Mean per-rank binary cross-entropy with unit task weights.
torch::Tensor rank_loss(const torch::Tensor& logits, const torch::Tensor& targets);

struct MaeReport {
    std::string dataset;
    std::size_t n = 0;
    double mae_mean = 0.0;
    double mae_std = 0.0;
    /// Decade (0 for [0,10), 1 for [10,20), ...) -> MAE of items in it.
    std::map<int, double> per_decade_mae;

    std::string to_json() const;
};

/// MAE summary of predicted vs. actual ages in years, grouped by actual decade.
MaeReport summarize_mae(std::span<const double> predicted, std::span<const double> actual,
                        const std::string& dataset_name = "");

/// Hard-decoded regressor predictions for every item, in years (eval mode).
std::vector<double> predict_ages(Regressor& regressor, const Dataset& dataset, double bin_width,
                                 int batch_size = 256);

MaeReport evaluate_mae(Regressor& regressor, const Dataset& dataset, double bin_width,
                       const std::string& dataset_name = "");

} // namespace cmaae
