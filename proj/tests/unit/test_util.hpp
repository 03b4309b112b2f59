#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "cmaae/config.hpp"
#include "cmaae/image.hpp"
#include "cmaae/networks.hpp"
#include "cmaae/synthetic.hpp"

namespace cmaae::test {

/// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("cmaae_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

/// Small, fast network shapes for unit tests.
inline NetworkSpec tiny_spec(int image_size = 32) {
    NetworkSpec spec;
    spec.image_size = image_size;
    spec.channels = 3;
    spec.latent_dim = 8;
    spec.base_filters = 4;
    spec.rank_count = 60;
    return spec;
}

inline TrainConfig tiny_config(std::uint64_t seed = 1) {
    TrainConfig cfg = TrainConfig::desk();
    cfg.seed = seed;
    cfg.latent_dim = 8;
    cfg.base_filters = 4;
    cfg.batch_size = 16;
    cfg.epochs = 2;
    cfg.pretrain_regressor_epochs = 1;
    cfg.pretrain_encoder_epochs = 1;
    cfg.checkpoint_every = 1;
    return cfg;
}

inline Dataset tiny_dataset(int identities = 4, int per_identity = 8, std::uint64_t seed = 3) {
    SynthConfig sc;
    sc.n_identities = identities;
    sc.images_per_identity = per_identity;
    sc.seed = seed;
    return gen_synthetic_dataset(sc);
}

inline torch::Tensor dataset_batch(const Dataset& ds, std::vector<double>* ages = nullptr) {
    std::vector<const ImageTensor*> ptrs;
    for (const auto& it : ds.items) {
        ptrs.push_back(&it.image);
        if (ages) ages->push_back(it.age.years);
    }
    return to_batch(ptrs);
}

inline bool bitwise_equal(const torch::Tensor& a, const torch::Tensor& b) {
    return a.sizes() == b.sizes() && a.dtype() == b.dtype() && torch::equal(a, b);
}

} // namespace cmaae::test
