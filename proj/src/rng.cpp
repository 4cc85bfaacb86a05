#include "seqlab/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace seqlab {

namespace {

// splitmix64 finalizer (Steele, Lea, Flood 2014). Used only to mix seeds.
std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

Rng Rng::stream(StreamKind kind) const {
  return Rng(splitmix64(seed_ ^ (0x5851f42d4c957f2dULL * static_cast<std::uint64_t>(kind))));
}

std::uint64_t Rng::next_u64() { return engine_(); }

double Rng::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double low, double high) {
  if (!(std::isfinite(low) && std::isfinite(high))) {
    throw std::invalid_argument("Rng::uniform: bounds must be finite");
  }
  if (!(low < high)) {
    throw std::invalid_argument("Rng::uniform: low must be < high");
  }
  return low + next_double() * (high - low);
}

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  if (n == 0) {
    throw std::invalid_argument("Rng::uniform_int: n must be >= 1");
  }
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x = next_u64();
  while (x >= limit) {
    x = next_u64();
  }
  return x % n;
}

}  // namespace seqlab
