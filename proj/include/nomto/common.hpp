#pragma once

#include <cstdint>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace nomto {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Interval = std::pair<double, double>;

// Deterministic random stream. xoshiro256++ seeded through splitmix64, with
// hand-rolled uniform/normal/int sampling so that identical seeds reproduce
// identical bits on any platform (std:: distributions do not guarantee that).
class Rng {
public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 random bits.
  double uniform01();
  double uniform(double lo, double hi);
  // Inclusive integer range.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  // Standard normal via Box-Muller (no cached spare: state advances by
  // exactly two draws per call).
  double normal();
  double normal(double mean, double stddev);

  // Independent substream derived from this stream's seed and a tag.
  Rng child(std::uint64_t tag) const;

  std::uint64_t seed() const { return seed_; }

private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
};

// 64-bit mixing hash (splitmix64 finalizer); used for seed derivation and
// stable content signatures.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v);
std::uint64_t hash_str(const std::string& s);

}  // namespace nomto
