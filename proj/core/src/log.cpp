// Only translation unit that includes spdlog: libtorch ships its own fmt
// headers, which are incompatible with the fmt that spdlog was built against.

#include "cmaae/log.hpp"

#include <cstdarg>
#include <cstdio>
#include <string>

#include <spdlog/spdlog.h>

namespace cmaae {
namespace {

std::string vformat(const char* format, va_list args) {
    va_list copy;
    va_copy(copy, args);
    const int n = std::vsnprintf(nullptr, 0, format, copy);
    va_end(copy);
    if (n <= 0) return {};
    std::string out(static_cast<std::size_t>(n) + 1, '\0');
    std::vsnprintf(out.data(), out.size(), format, args);
    out.resize(static_cast<std::size_t>(n));
    return out;
}

} // namespace

void log_info(const char* format, ...) {
    if (!spdlog::should_log(spdlog::level::info)) return;
    va_list args;
    va_start(args, format);
    const std::string msg = vformat(format, args);
    va_end(args);
    spdlog::info("{}", msg);
}

void log_warn(const char* format, ...) {
    va_list args;
    va_start(args, format);
    const std::string msg = vformat(format, args);
    va_end(args);
    spdlog::warn("{}", msg);
}

void set_log_quiet(bool quiet) {
    spdlog::set_level(quiet ? spdlog::level::warn : spdlog::level::info);
}

} // namespace cmaae
