#pragma once

#include <cstdint>

#include "cmaae/data.hpp"

namespace cmaae {

struct SynthConfig {
    int image_size = 32;
    double max_age = 60.0;
    int n_identities = 100;
    int images_per_identity = 10;
    std::uint64_t seed = 0;
    /// Offset added to identity indices, so held-out splits can draw fresh
    /// identities from the same seed.
    int first_identity = 0;
};

// Oracle regions, in absolute pixel coordinates (half-open ranges).
inline constexpr int kIdentityRowBegin = 2;
inline constexpr int kIdentityRowEnd = 8;
inline constexpr int kIdentityColMargin = 2;
inline constexpr int kWrinkleRowBegin = 20;
inline constexpr int kWrinkleRowEnd = 27;
inline constexpr int kWrinkleColBegin = 8;
inline constexpr int kWrinkleColEnd = 24;
inline constexpr double kWrinkleYoung = 0.9;
inline constexpr double kWrinkleSpan = 0.6;
inline constexpr int kMinSyntheticSize = 32;

void validate(const SynthConfig& cfg);

/// Renders identity `identity` at `age` years. Identity appearance depends
/// only on (seed, identity); the wrinkle rectangle is painted last and encodes
/// age exactly as 0.9 - 0.6 * age / max_age on its even rows.
ImageTensor render_face(const SynthConfig& cfg, int identity, double age);

std::string identity_name(int identity);

/// Pure function of `cfg`: identities [first_identity, first_identity + n),
/// each with `images_per_identity` ages drawn uniformly from [0, max_age].
Dataset gen_synthetic_dataset(const SynthConfig& cfg);

/// Age readout from the wrinkle rectangle, clamped to [0, max_age].
double oracle_age(const ImageTensor& image, double max_age);

/// Euclidean distance between the mean colours of the two identity patches.
double oracle_identity_distance(const ImageTensor& a, const ImageTensor& b);

} // namespace cmaae
