#include "cmaae/png_io.hpp"

#include <cmath>
#include <cstring>

#include <png.h>

#include "cmaae/error.hpp"

namespace cmaae {

Raw8Image read_png(const std::filesystem::path& path) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw UserError("cannot read PNG " + path.string() + ": " + image.message);

    const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
    image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;

    Raw8Image out;
    out.height = static_cast<int>(image.height);
    out.width = static_cast<int>(image.width);
    out.channels = color ? 3 : 1;
    out.pixels.resize(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw UserError("cannot decode PNG " + path.string() + ": " + msg);
    }
    return out;
}

void write_png(const std::filesystem::path& path, const Raw8Image& raw) {
    require(raw.channels == 1 || raw.channels == 3, "PNG export supports 1 or 3 channels");
    require(raw.pixels.size() == static_cast<std::size_t>(raw.height) * raw.width * raw.channels,
            "pixel buffer does not match dimensions");
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(raw.width);
    image.height = static_cast<png_uint_32>(raw.height);
    image.format = raw.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&image, path.c_str(), 0, raw.pixels.data(), 0, nullptr))
        throw UserError("cannot write PNG " + path.string() + ": " + image.message);
}

Raw8Image quantize(const ImageTensor& image) {
    Raw8Image out;
    out.height = image.height();
    out.width = image.width();
    out.channels = image.channels();
    out.pixels.reserve(image.size());
    for (double v : image.values()) {
        double clamped = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        out.pixels.push_back(static_cast<std::uint8_t>(std::lround(clamped * 255.0)));
    }
    return out;
}

} // namespace cmaae
