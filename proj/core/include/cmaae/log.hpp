#pragma once

namespace cmaae {

/// printf-style progress logging to stderr. Kept free of third-party headers so
/// it can be included next to libtorch.
void log_info(const char* format, ...) __attribute__((format(printf, 1, 2)));
void log_warn(const char* format, ...) __attribute__((format(printf, 1, 2)));

/// Suppresses info-level messages (warnings still print).
void set_log_quiet(bool quiet);

} // namespace cmaae
