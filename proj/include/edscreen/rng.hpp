#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace edscreen {

/// Deterministic seeded stream with value-keyed substreams, so independent
/// units (LAs, replications, grid cells) draw from non-overlapping streams
/// that do not move when unrelated parts of a run change.
///
/// Distributions are implemented here rather than with std::<random>
/// distributions, whose output is implementation-defined; results must be
/// reproducible for a given seed.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : root_key_(seed), engine_(mix(seed)) {}

  /// Substream keyed by one or more 64-bit values (order matters).
  RngStream substream(std::span<const std::uint64_t> keys) const;
  RngStream substream(std::uint64_t k0) const;
  RngStream substream(std::uint64_t k0, std::uint64_t k1) const;
  RngStream substream(std::uint64_t k0, std::uint64_t k1, std::uint64_t k2) const;
  RngStream substream(std::string_view tag) const;

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0,1) with 53 random bits.
  double uniform();

  /// Uniform integer in [0, n), n >= 1.
  std::uint64_t uniform_below(std::uint64_t n);

  double normal(double mean = 0.0, double sd = 1.0);
  bool bernoulli(double p);
  int poisson(double mean);
  double gamma(double shape, double scale = 1.0);
  double beta(double a, double b);
  double lognormal(double mu, double sigma);

  /// Index drawn from unnormalized nonnegative weights.
  std::size_t categorical(std::span<const double> weights);

  /// Sorted without-replacement sample of k indices from [0, n)
  /// (sequential selection; one uniform per element).
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  static std::uint64_t mix(std::uint64_t x);  // splitmix64 finalizer
  std::uint64_t root_key_ = 0;
  std::mt19937_64 engine_;
};

}  // namespace edscreen
