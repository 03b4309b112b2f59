#pragma once

#include <filesystem>

#include "cmaae/networks.hpp"

namespace cmaae {

// Parameter blob layout (all integers and floats little-endian):
//   "CMAEPRM1" | u64 spec fingerprint | u32 array count
//   per array: u32 name length | name bytes | u32 ndim | i64 dims[ndim]
//              | u64 element count | f32 values[count]
// Arrays appear in lexicographic name order.

void write_params(const std::filesystem::path& path, const NetworkParams& params);
NetworkParams read_params(const std::filesystem::path& path);

} // namespace cmaae
