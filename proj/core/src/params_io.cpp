#include "cmaae/params_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "cmaae/error.hpp"

namespace cmaae {

static_assert(std::endian::native == std::endian::little, "parameter blobs assume a little-endian host");

namespace {

constexpr char kMagic[8] = {'C', 'M', 'A', 'E', 'P', 'R', 'M', '1'};

template <typename T>
void put(std::ofstream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& path) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw UserError("truncated parameter file " + path.string());
    return value;
}

} // namespace

void write_params(const std::filesystem::path& path, const NetworkParams& params) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw UserError("cannot write " + path.string());
    out.write(kMagic, sizeof(kMagic));
    put<std::uint64_t>(out, params.spec_fingerprint);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.arrays.size()));
    for (const auto& [name, arr] : params.arrays) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(arr.shape.size()));
        for (auto d : arr.shape) put<std::int64_t>(out, d);
        put<std::uint64_t>(out, arr.values.size());
        out.write(reinterpret_cast<const char*>(arr.values.data()),
                  static_cast<std::streamsize>(arr.values.size() * sizeof(float)));
    }
    if (!out) throw UserError("failed writing " + path.string());
}

NetworkParams read_params(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UserError("cannot open parameter file " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw UserError("not a parameter file: " + path.string());

    NetworkParams params;
    params.spec_fingerprint = get<std::uint64_t>(in, path);
    const auto count = get<std::uint32_t>(in, path);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = get<std::uint32_t>(in, path);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        ParamArray arr;
        const auto ndim = get<std::uint32_t>(in, path);
        std::uint64_t expected = 1;
        for (std::uint32_t d = 0; d < ndim; ++d) {
            arr.shape.push_back(get<std::int64_t>(in, path));
            expected *= static_cast<std::uint64_t>(arr.shape.back());
        }
        const auto n = get<std::uint64_t>(in, path);
        if (n != expected) throw UserError("corrupt array '" + name + "' in " + path.string());
        arr.values.resize(n);
        in.read(reinterpret_cast<char*>(arr.values.data()), static_cast<std::streamsize>(n * sizeof(float)));
        if (!in) throw UserError("truncated parameter file " + path.string());
        params.arrays.emplace(std::move(name), std::move(arr));
    }
    return params;
}

} // namespace cmaae
