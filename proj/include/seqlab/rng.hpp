#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace seqlab {

// Deterministic random source. The engine is std::mt19937_64, whose output
// stream is pinned by the C++ standard; all value mappings (uniform doubles,
// bounded integers, shuffling) are implemented here rather than through
// std::uniform_*_distribution, which is implementation-defined. Identical
// seeds therefore produce identical streams on every platform.
//
// Derived streams: stream(kind) hashes the original seed together with a
// per-kind constant (splitmix64 finalizer), so the init / dropout / shuffle
// streams are independent. Consuming values from one stream never perturbs
// the others.
class Rng {
 public:
  enum class StreamKind : std::uint64_t {
    init = 1,
    dropout = 2,
    shuffle = 3,
  };

  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }

  // Independent generator derived from the original seed, not current state.
  Rng stream(StreamKind kind) const;

  std::uint64_t next_u64();

  // Uniform on [0, 1): 53 random mantissa bits.
  double next_double();

  // Uniform on [low, high); requires finite bounds with low < high.
  double uniform(double low, double high);

  // Uniform integer in [0, n), n >= 1. Rejection sampling, no modulo bias.
  std::uint64_t uniform_int(std::uint64_t n);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    // Fisher-Yates, descending.
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_ = 0;
  std::mt19937_64 engine_;
};

}  // namespace seqlab
