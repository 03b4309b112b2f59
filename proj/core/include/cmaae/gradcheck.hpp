#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cmaae/networks.hpp"

namespace cmaae {

struct GradcheckOptions {
    std::uint64_t seed = 0;
    int coordinates = 64;  ///< sampled coordinates per loss (>= 50)
    double step = 1e-4;    ///< central-difference step
    int batch = 3;
    /// Small double-precision networks keep the finite differences cheap.
    NetworkSpec spec{16, 3, 8, 4, 12};
};

struct GradcheckEntry {
    std::string name;
    int coordinates = 0;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    int kinks_skipped = 0;  ///< coordinates whose step straddled a ReLU switch
};

struct GradcheckReport {
    std::vector<GradcheckEntry> entries;
    double tolerance = 1e-4;

    bool pass() const;
    std::string to_text() const;
};

/// Relative error used throughout: |a - n| / max(|a|, |n|, kGradFloor).
inline constexpr double kGradFloor = 1e-8;
double relative_error(double analytic, double numeric);

/// Spread of second differences, relative to step * |slope|, above which a
/// coordinate is treated as straddling a ReLU switch and replaced. Any kink
/// left undetected moves the central difference by under 2e-5 relative.
inline constexpr double kKinkRatio = 1e-5;

/// Compares autograd gradients of every loss (discriminator GAN, generator GAN
/// in both variants, regression, identity, pixel, the generator objective and
/// the rank loss) against central finite differences in double precision.
GradcheckReport run_gradcheck(const GradcheckOptions& options = {});

} // namespace cmaae
