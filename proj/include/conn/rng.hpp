#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace conn {

/// Portable seeded random source.
///
/// The standard distributions are implementation-defined, so every draw
/// here is derived directly from the raw 64-bit engine output. Streams for
/// independent work items are derived with splitmix64 so results do not
/// depend on scheduling order.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Seed of an independent stream for work item `stream` under `seed`.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);
  static Rng stream(std::uint64_t seed, std::uint64_t stream) {
    return Rng(derive(seed, stream));
  }

  std::uint64_t bits() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n), unbiased.
  std::size_t index(std::size_t n);
  double normal();
  /// Gamma(shape, 1) by Marsaglia-Tsang, with the shape < 1 boost.
  double gamma(double shape);
  std::vector<double> dirichlet(std::span<const double> alpha);
  /// Draw from an unnormalized non-negative weight vector.
  std::size_t categorical(std::span<const double> weights);
  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace conn
