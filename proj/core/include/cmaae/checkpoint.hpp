#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "cmaae/training.hpp"

namespace cmaae {

// Checkpoint directory layout:
//   manifest.json            spec, config, loss weights, phase flags, counters,
//                            RNG state, parameter digests, metrics (+ digest)
//   E.bin G.bin D.bin E_pre.bin R.bin   parameter blobs (see params_io.hpp)
//   opt_generator.pt opt_discriminator.pt   Adam moments

/// Writes atomically: everything goes to `<path>.tmp` which is then renamed.
void save_checkpoint(const TrainState& state, const std::filesystem::path& path,
                     const std::map<std::string, double>& metrics = {});

/// Restores a state. When `expected` is given, its fingerprint must match the
/// checkpoint's network spec.
TrainState load_checkpoint(const std::filesystem::path& path,
                           const std::optional<NetworkSpec>& expected = std::nullopt);

/// Raw manifest text.
std::string read_manifest(const std::filesystem::path& path);

/// Metrics recorded in the manifest.
std::map<std::string, double> read_metrics(const std::filesystem::path& path);

} // namespace cmaae
