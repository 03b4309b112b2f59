#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <torch/types.h>

namespace cmaae {

/// Height x width x channels image with intensities in [0, 1], stored HWC.
///
/// Values are kept in double so analytic oracles (age readout, identity
/// distance) are exact before any 8-bit export.
class ImageTensor {
public:
    ImageTensor() = default;
    ImageTensor(int height, int width, int channels, double fill = 0.0);

    int height() const { return height_; }
    int width() const { return width_; }
    int channels() const { return channels_; }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    double& at(int row, int col, int ch) { return values_[index(row, col, ch)]; }
    double at(int row, int col, int ch) const { return values_[index(row, col, ch)]; }

    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }

    bool same_shape(const ImageTensor& other) const {
        return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
    }

    friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

private:
    std::size_t index(int row, int col, int ch) const {
        return (static_cast<std::size_t>(row) * width_ + col) * channels_ + ch;
    }

    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    std::vector<double> values_;
};

/// Stacks images into a float NCHW tensor. All images must share a shape.
torch::Tensor to_batch(std::span<const ImageTensor* const> images);
torch::Tensor to_batch(std::span<const ImageTensor> images);

/// Converts one CHW (or 1xCHW) tensor back to an image, clamping into [0, 1].
ImageTensor from_tensor(const torch::Tensor& chw);

/// Splits an NCHW tensor into images.
std::vector<ImageTensor> from_batch(const torch::Tensor& nchw);

} // namespace cmaae
