#pragma once

#include <cstdint>
#include <random>

namespace qcd {

/// splitmix64 finalizer; used to derive well-separated seeds from counters.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Purpose tag for the independent streams an episode consumes.
enum class StreamKind : std::uint64_t {
  observations = 1,
  control = 2,
};

/// Seed for stream `kind` of trial `trial` under `base_seed`. Depends only on
/// the triple, so results do not depend on scheduling order.
constexpr std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t trial, StreamKind kind) noexcept {
  return mix64(mix64(mix64(base_seed) ^ trial) + static_cast<std::uint64_t>(kind));
}

/// A reproducible random stream. Never shared between episodes.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : engine_(seed) {}

  double standard_normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  bool bernoulli(double p) { return uniform() < p; }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace qcd
