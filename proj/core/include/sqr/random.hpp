#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace sqr {

using Engine = std::mt19937_64;

/// Deterministic random stream keyed by (seed, stream id). Child streams are
/// derived by mixing, so the same key always reproduces the same sequence
/// regardless of the order in which streams are created.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed, std::uint64_t stream_id = 0);

  RandomStream child(std::uint64_t id) const;
  RandomStream child(std::string_view name) const;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  Engine& engine() noexcept { return engine_; }

  double uniform(double lo = 0.0, double hi = 1.0);
  double normal(double mean = 0.0, double sd = 1.0);
  double gamma(double shape);
  double beta(double a, double b);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  Engine engine_;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t fnv1a64(std::string_view text) noexcept;

}  // namespace sqr
