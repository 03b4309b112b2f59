#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cmaae/image.hpp"
#include "cmaae/png_io.hpp"

namespace cmaae {

/// Scalar age label. `normalized` is exactly `years / max_age`.
struct AgeLabel {
    double years = 0.0;
    double normalized = 0.0;
    double max_age = 1.0;

    double denormalize() const { return normalized * max_age; }
};

AgeLabel normalize_age(double years, double max_age);

enum class Provenance { RealFolder, Synthetic };

struct DatasetItem {
    ImageTensor image;
    AgeLabel age;
    std::string identity;
};

struct Dataset {
    std::vector<DatasetItem> items;
    double max_age = 0.0;
    Provenance provenance = Provenance::RealFolder;

    std::size_t size() const { return items.size(); }
    bool empty() const { return items.empty(); }
    int image_size() const { return items.empty() ? 0 : items.front().image.height(); }
    int channels() const { return items.empty() ? 0 : items.front().image.channels(); }
};

/// Centre-crops to a square, bilinear-resizes to `image_size`, scales by 1/255.
ImageTensor preprocess_image(const Raw8Image& raw, int image_size);

/// Parsed `<age>_<identity>_<index>.png`. The age may be an integer or the
/// `12p50` form written by the synthetic exporter.
struct ParsedName {
    double age = 0.0;
    std::string identity;
    int index = 0;
};

bool parse_item_filename(const std::string& filename, ParsedName& out);

/// Loads `<root>/<split>/*.png`. `max_age` is the configured dataset maximum,
/// never the observed one. A `synthetic.json` marker in `root` (written by
/// export_dataset for generated data) sets provenance to synthetic.
Dataset load_dataset(const std::filesystem::path& root,
                     const std::string& split,
                     int image_size,
                     double max_age);

/// Writes items as `<root>/<split>/<age>_<identity>_<index>.png` with ages
/// rounded to two decimals and `.` replaced by `p`.
void export_dataset(const Dataset& dataset,
                    const std::filesystem::path& root,
                    const std::string& split);

/// Formats an age for filenames, e.g. 30.25 -> "30p25".
std::string format_age_token(double years);

} // namespace cmaae
