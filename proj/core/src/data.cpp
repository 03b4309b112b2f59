#include "cmaae/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>

#include "cmaae/log.hpp"

#include "cmaae/error.hpp"

namespace fs = std::filesystem;

namespace cmaae {

namespace {

constexpr const char* kSyntheticMarker = "synthetic.json";

bool all_digits(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

bool parse_age_token(std::string_view token, double& age) {
    auto sep = token.find_first_of("p.");
    if (sep == std::string_view::npos) {
        if (!all_digits(token)) return false;
        long value = 0;
        std::from_chars(token.data(), token.data() + token.size(), value);
        age = static_cast<double>(value);
        return true;
    }
    auto whole = token.substr(0, sep);
    auto frac = token.substr(sep + 1);
    if (!all_digits(whole) || !all_digits(frac)) return false;
    std::string text(whole);
    text += '.';
    text += frac;
    age = std::stod(text);
    return true;
}

// Bilinear sample with half-pixel centres. Constant regions stay exact
// because the interpolation is written as a + w * (b - a).
double sample_bilinear(const Raw8Image& raw, int off_y, int off_x, int side,
                       double sy, double sx, int ch) {
    auto clampi = [side](int v) { return std::clamp(v, 0, side - 1); };
    sy = std::clamp(sy, 0.0, static_cast<double>(side - 1));
    sx = std::clamp(sx, 0.0, static_cast<double>(side - 1));
    const int y0 = static_cast<int>(std::floor(sy));
    const int x0 = static_cast<int>(std::floor(sx));
    const int y1 = clampi(y0 + 1);
    const int x1 = clampi(x0 + 1);
    const double wy = sy - y0;
    const double wx = sx - x0;
    auto px = [&](int y, int x) {
        return static_cast<double>(
            raw.pixels[(static_cast<std::size_t>(off_y + y) * raw.width + (off_x + x)) * raw.channels + ch]);
    };
    const double top = px(y0, x0) + wx * (px(y0, x1) - px(y0, x0));
    const double bottom = px(y1, x0) + wx * (px(y1, x1) - px(y1, x0));
    return top + wy * (bottom - top);
}

ImageTensor convert_channels(const ImageTensor& img, int channels) {
    if (img.channels() == channels) return img;
    ImageTensor out(img.height(), img.width(), channels);
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) {
            if (channels == 3) {
                for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, x, 0);
            } else {
                out.at(y, x, 0) = 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
            }
        }
    return out;
}

} // namespace

AgeLabel normalize_age(double years, double max_age) {
    require(max_age > 0.0, "max_age must be positive");
    require(std::isfinite(years) && years >= 0.0 && years <= max_age,
            "age " + std::to_string(years) + " outside [0, " + std::to_string(max_age) + "]");
    return AgeLabel{years, years / max_age, max_age};
}

ImageTensor preprocess_image(const Raw8Image& raw, int image_size) {
    require(raw.height > 0 && raw.width > 0, "zero-area image");
    require(raw.channels == 1 || raw.channels == 3, "expected 1 or 3 channels");
    require(image_size > 0, "image_size must be positive");
    const int side = std::min(raw.height, raw.width);
    const int off_y = (raw.height - side) / 2;
    const int off_x = (raw.width - side) / 2;
    const double scale = static_cast<double>(side) / image_size;

    ImageTensor out(image_size, image_size, raw.channels);
    for (int y = 0; y < image_size; ++y) {
        const double sy = (y + 0.5) * scale - 0.5;
        for (int x = 0; x < image_size; ++x) {
            const double sx = (x + 0.5) * scale - 0.5;
            for (int c = 0; c < raw.channels; ++c)
                out.at(y, x, c) = sample_bilinear(raw, off_y, off_x, side, sy, sx, c) / 255.0;
        }
    }
    return out;
}

bool parse_item_filename(const std::string& filename, ParsedName& out) {
    fs::path p(filename);
    if (p.extension() != ".png") return false;
    const std::string stem = p.stem().string();
    const auto first = stem.find('_');
    const auto last = stem.rfind('_');
    if (first == std::string::npos || last == first) return false;

    ParsedName parsed;
    if (!parse_age_token(std::string_view(stem).substr(0, first), parsed.age)) return false;
    parsed.identity = stem.substr(first + 1, last - first - 1);
    if (parsed.identity.empty()) return false;
    auto index_token = std::string_view(stem).substr(last + 1);
    if (!all_digits(index_token)) return false;
    std::from_chars(index_token.data(), index_token.data() + index_token.size(), parsed.index);
    out = std::move(parsed);
    return true;
}

Dataset load_dataset(const fs::path& root, const std::string& split, int image_size, double max_age) {
    const fs::path dir = root / split;
    require(fs::is_directory(dir), "dataset directory not found: " + dir.string());
    require(max_age > 0.0, "max_age must be positive");

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    Dataset ds;
    ds.max_age = max_age;
    ds.provenance = fs::exists(root / kSyntheticMarker) ? Provenance::Synthetic : Provenance::RealFolder;

    for (const auto& file : files) {
        ParsedName name;
        if (!parse_item_filename(file.filename().string(), name)) {
            log_warn("skipping %s: expected <age>_<identity>_<index>.png", file.string().c_str());
            continue;
        }
        if (name.age > max_age) {
            log_warn("skipping %s: age %g exceeds max_age %g", file.string().c_str(), name.age, max_age);
            continue;
        }
        ImageTensor img = preprocess_image(read_png(file), image_size);
        if (!ds.items.empty()) img = convert_channels(img, ds.channels());
        ds.items.push_back(DatasetItem{std::move(img), normalize_age(name.age, max_age), name.identity});
    }
    require(!ds.items.empty(), "no loadable items in " + dir.string());
    return ds;
}

std::string format_age_token(double years) {
    const long cents = std::lround(years * 100.0);
    const long whole = cents / 100;
    const long frac = cents % 100;
    std::string out = std::to_string(whole) + "p";
    if (frac < 10) out += '0';
    out += std::to_string(frac);
    return out;
}

void export_dataset(const Dataset& dataset, const fs::path& root, const std::string& split) {
    const fs::path dir = root / split;
    fs::create_directories(dir);
    std::map<std::string, int> counters;
    for (const auto& item : dataset.items) {
        const int index = counters[item.identity]++;
        const std::string name =
            format_age_token(item.age.years) + "_" + item.identity + "_" + std::to_string(index) + ".png";
        write_png(dir / name, quantize(item.image));
    }
    if (dataset.provenance == Provenance::Synthetic) {
        std::ofstream marker(root / kSyntheticMarker);
        marker << "{\"generator\": \"cmaae-synthetic\", \"max_age\": " << dataset.max_age << "}\n";
    }
}

} // namespace cmaae
