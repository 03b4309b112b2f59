#include "cmaae/image.hpp"

#include <algorithm>

#include <torch/torch.h>

#include "cmaae/error.hpp"

namespace cmaae {

ImageTensor::ImageTensor(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels),
      values_(static_cast<std::size_t>(height) * width * channels, fill) {
    require(height > 0 && width > 0 && channels > 0, "image dimensions must be positive");
}

torch::Tensor to_batch(std::span<const ImageTensor* const> images) {
    require(!images.empty(), "cannot build an empty batch");
    const ImageTensor& first = *images.front();
    const int h = first.height();
    const int w = first.width();
    const int c = first.channels();
    auto batch = torch::empty({static_cast<long>(images.size()), c, h, w}, torch::kFloat32);
    float* out = batch.data_ptr<float>();
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (std::size_t n = 0; n < images.size(); ++n) {
        const ImageTensor& img = *images[n];
        require(img.same_shape(first), "batch images must share dimensions");
        auto src = img.values();
        float* dst = out + n * plane * c;
        for (std::size_t p = 0; p < plane; ++p)
            for (int ch = 0; ch < c; ++ch)
                dst[ch * plane + p] = static_cast<float>(src[p * c + ch]);
    }
    return batch;
}

torch::Tensor to_batch(std::span<const ImageTensor> images) {
    std::vector<const ImageTensor*> ptrs;
    ptrs.reserve(images.size());
    for (const auto& img : images) ptrs.push_back(&img);
    return to_batch(std::span<const ImageTensor* const>(ptrs));
}

ImageTensor from_tensor(const torch::Tensor& chw) {
    auto t = chw.dim() == 4 ? chw.squeeze(0) : chw;
    require(t.dim() == 3, "expected a CHW tensor");
    t = t.detach().to(torch::kCPU, torch::kFloat64).contiguous();
    const int c = static_cast<int>(t.size(0));
    const int h = static_cast<int>(t.size(1));
    const int w = static_cast<int>(t.size(2));
    ImageTensor img(h, w, c);
    const double* src = t.data_ptr<double>();
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    auto dst = img.values();
    for (std::size_t p = 0; p < plane; ++p)
        for (int ch = 0; ch < c; ++ch)
            dst[p * c + ch] = std::clamp(src[ch * plane + p], 0.0, 1.0);
    return img;
}

std::vector<ImageTensor> from_batch(const torch::Tensor& nchw) {
    require(nchw.dim() == 4, "expected an NCHW tensor");
    std::vector<ImageTensor> out;
    out.reserve(nchw.size(0));
    for (long n = 0; n < nchw.size(0); ++n) out.push_back(from_tensor(nchw[n]));
    return out;
}

} // namespace cmaae
