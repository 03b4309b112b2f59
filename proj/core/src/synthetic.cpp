#include "cmaae/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <random>

#include "cmaae/error.hpp"

namespace cmaae {

namespace {

constexpr double kBackground = 0.25;
constexpr double kEyeValue = 0.08;
constexpr double kEyeRadius = 2.0;

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t identity, std::uint64_t sub) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(identity), static_cast<std::uint32_t>(sub)};
    return std::mt19937_64(seq);
}

struct IdentityLook {
    double radius_x;
    double radius_y;
    std::array<double, 3> skin;
    std::array<double, 3> signature;
    double eye_row;
    double eye_dx;
};

IdentityLook draw_identity(const SynthConfig& cfg, int identity) {
    // Sub-stream 0 is reserved for the identity; items use 1 + index.
    auto rng = stream(cfg.seed, static_cast<std::uint64_t>(identity), 0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double s = cfg.image_size;
    IdentityLook look{};
    look.radius_x = s * (0.30 + 0.12 * unit(rng));
    look.radius_y = s * (0.36 + 0.10 * unit(rng));
    for (auto& c : look.skin) c = 0.45 + 0.40 * unit(rng);
    for (auto& c : look.signature) c = 0.05 + 0.90 * unit(rng);
    look.eye_row = 11.5 + 1.5 * unit(rng);
    look.eye_dx = s * 0.18 + 3.0 * (unit(rng) - 0.5);
    return look;
}

void fill_rect(ImageTensor& img, int r0, int r1, int c0, int c1, const std::array<double, 3>& rgb) {
    for (int y = r0; y < r1; ++y)
        for (int x = c0; x < c1; ++x)
            for (int c = 0; c < img.channels(); ++c) img.at(y, x, c) = rgb[c];
}

void fill_disk(ImageTensor& img, double cy, double cx, double radius, double value) {
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) {
            const double dy = y + 0.5 - cy;
            const double dx = x + 0.5 - cx;
            if (dy * dy + dx * dx <= radius * radius)
                for (int c = 0; c < img.channels(); ++c) img.at(y, x, c) = value;
        }
}

std::array<double, 3> patch_mean(const ImageTensor& img) {
    std::array<double, 3> mean{0.0, 0.0, 0.0};
    const int c0 = kIdentityColMargin;
    const int c1 = img.width() - kIdentityColMargin;
    const double count = static_cast<double>(kIdentityRowEnd - kIdentityRowBegin) * (c1 - c0);
    for (int y = kIdentityRowBegin; y < kIdentityRowEnd; ++y)
        for (int x = c0; x < c1; ++x)
            for (int c = 0; c < img.channels(); ++c) mean[c] += img.at(y, x, c);
    for (auto& m : mean) m /= count;
    return mean;
}

} // namespace

void validate(const SynthConfig& cfg) {
    require(cfg.image_size >= kMinSyntheticSize, "synthetic image_size must be >= 32 for the oracle regions");
    require((cfg.image_size & (cfg.image_size - 1)) == 0, "image_size must be a power of two");
    require(cfg.max_age > 0.0, "max_age must be positive");
    require(cfg.n_identities >= 1, "n_identities must be >= 1");
    require(cfg.images_per_identity >= 1, "images_per_identity must be >= 1");
    require(cfg.first_identity >= 0, "first_identity must be >= 0");
}

std::string identity_name(int identity) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "id%04d", identity);
    return buf;
}

ImageTensor render_face(const SynthConfig& cfg, int identity, double age) {
    validate(cfg);
    require(age >= 0.0 && age <= cfg.max_age, "age outside [0, max_age]");
    const int s = cfg.image_size;
    const IdentityLook look = draw_identity(cfg, identity);

    ImageTensor img(s, s, 3, kBackground);

    const double cy = s / 2.0;
    const double cx = s / 2.0;
    for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) {
            const double ny = (y + 0.5 - cy) / look.radius_y;
            const double nx = (x + 0.5 - cx) / look.radius_x;
            if (nx * nx + ny * ny <= 1.0)
                for (int c = 0; c < 3; ++c) img.at(y, x, c) = look.skin[c];
        }

    fill_rect(img, kIdentityRowBegin, kIdentityRowEnd, kIdentityColMargin, s - kIdentityColMargin, look.signature);

    fill_disk(img, look.eye_row, cx - look.eye_dx, kEyeRadius, kEyeValue);
    fill_disk(img, look.eye_row, cx + look.eye_dx, kEyeRadius, kEyeValue);

    const double wrinkle = kWrinkleYoung - kWrinkleSpan * (age / cfg.max_age);
    for (int y = kWrinkleRowBegin; y < kWrinkleRowEnd; ++y) {
        const double v = (y % 2 == 0) ? wrinkle : kWrinkleYoung;
        for (int x = kWrinkleColBegin; x < kWrinkleColEnd; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = v;
    }
    return img;
}

Dataset gen_synthetic_dataset(const SynthConfig& cfg) {
    validate(cfg);
    Dataset ds;
    ds.max_age = cfg.max_age;
    ds.provenance = Provenance::Synthetic;
    ds.items.reserve(static_cast<std::size_t>(cfg.n_identities) * cfg.images_per_identity);
    for (int k = 0; k < cfg.n_identities; ++k) {
        const int identity = cfg.first_identity + k;
        for (int index = 0; index < cfg.images_per_identity; ++index) {
            auto rng = stream(cfg.seed, static_cast<std::uint64_t>(identity), 1 + static_cast<std::uint64_t>(index));
            const double age = std::uniform_real_distribution<double>(0.0, cfg.max_age)(rng);
            ds.items.push_back(DatasetItem{render_face(cfg, identity, age), normalize_age(age, cfg.max_age),
                                           identity_name(identity)});
        }
    }
    return ds;
}

double oracle_age(const ImageTensor& image, double max_age) {
    require(image.height() >= kMinSyntheticSize && image.width() >= kMinSyntheticSize,
            "oracle_age needs an image of at least 32x32");
    double sum = 0.0;
    int count = 0;
    for (int y = kWrinkleRowBegin; y < kWrinkleRowEnd; y += 2)
        for (int x = kWrinkleColBegin; x < kWrinkleColEnd; ++x)
            for (int c = 0; c < image.channels(); ++c) {
                sum += image.at(y, x, c);
                ++count;
            }
    const double mean = sum / count;
    return std::clamp(max_age * (kWrinkleYoung - mean) / kWrinkleSpan, 0.0, max_age);
}

double oracle_identity_distance(const ImageTensor& a, const ImageTensor& b) {
    require(a.same_shape(b), "oracle_identity_distance: mismatched dimensions");
    require(a.height() >= kIdentityRowEnd && a.width() > 2 * kIdentityColMargin, "image too small for identity patch");
    const auto ma = patch_mean(a);
    const auto mb = patch_mean(b);
    double sq = 0.0;
    for (int c = 0; c < a.channels(); ++c) sq += (ma[c] - mb[c]) * (ma[c] - mb[c]);
    return std::sqrt(sq);
}

} // namespace cmaae
