#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cmaae/image.hpp"

namespace cmaae {

/// Decoded 8-bit image, interleaved HWC.
struct Raw8Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<std::uint8_t> pixels;
};

/// Reads a PNG, expanding palettes and dropping alpha. Output has 1 or 3 channels.
Raw8Image read_png(const std::filesystem::path& path);

void write_png(const std::filesystem::path& path, const Raw8Image& image);

/// Rounds [0, 1] intensities to the nearest 8-bit level.
Raw8Image quantize(const ImageTensor& image);

} // namespace cmaae
