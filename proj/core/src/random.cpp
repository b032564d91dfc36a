#include "sqr/random.hpp"

namespace sqr {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed),
      stream_id_(stream_id),
      engine_(splitmix64(splitmix64(seed) ^ splitmix64(stream_id + 0x632be59bd9b4e019ULL))) {}

RandomStream RandomStream::child(std::uint64_t id) const {
  return RandomStream(seed_, splitmix64(stream_id_ * 0x9e3779b97f4a7c15ULL + id + 1));
}

RandomStream RandomStream::child(std::string_view name) const { return child(fnv1a64(name)); }

double RandomStream::uniform(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(engine_);
}

double RandomStream::normal(double mean, double sd) {
  return std::normal_distribution<double>(mean, sd)(engine_);
}

double RandomStream::gamma(double shape) {
  return std::gamma_distribution<double>(shape, 1.0)(engine_);
}

double RandomStream::beta(double a, double b) {
  const double x = gamma(a);
  const double y = gamma(b);
  return x / (x + y);
}

}  // namespace sqr
