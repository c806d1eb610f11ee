#pragma once

#include <iosfwd>

#include "nomto/surrogate.hpp"

namespace nomto {

// How to train one operator surrogate when the store does not have it.
struct SurrogatePlan {
  std::string variant = "spectral";  // spectral | convolutional
  std::int64_t samples = 10000;      // desk-scale default
  OptSettings opt;
};

// Deterministic per-op substream so a library trains identically no matter
// which order its ops are provisioned in.
std::uint64_t op_stream_seed(std::uint64_t seed, const std::string& op_name);

// Loads the block from the store, training and saving it first when missing
// (always retrains when force is set). log, if given, receives progress
// lines.
SurrogateBlock ensure_surrogate(const SurrogateStore& store, const OpSpec& op,
                                const Grid& grid, const SurrogatePlan& plan,
                                std::uint64_t seed, bool force = false,
                                std::ostream* log = nullptr);

// Provisions every distinct op name of a library. Returns the names that
// were actually trained (rather than loaded).
std::vector<std::string> provision_library(const SurrogateStore& store,
                                           const std::vector<OpSpec>& library,
                                           const Grid& grid,
                                           const SurrogatePlan& plan,
                                           std::uint64_t seed,
                                           bool force = false,
                                           std::ostream* log = nullptr);

}  // namespace nomto
