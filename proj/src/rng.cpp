#include "edscreen/rng.hpp"

#include <stdexcept>

namespace edscreen {

std::uint64_t RngStream::mix(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RngStream RngStream::substream(std::span<const std::uint64_t> keys) const {
  std::uint64_t k = root_key_;
  for (std::uint64_t v : keys) k = mix(k ^ mix(v));
  RngStream s(k);
  return s;
}

RngStream RngStream::substream(std::uint64_t k0) const {
  const std::uint64_t keys[] = {k0};
  return substream(std::span<const std::uint64_t>(keys));
}

RngStream RngStream::substream(std::uint64_t k0, std::uint64_t k1) const {
  const std::uint64_t keys[] = {k0, k1};
  return substream(std::span<const std::uint64_t>(keys));
}

RngStream RngStream::substream(std::uint64_t k0, std::uint64_t k1, std::uint64_t k2) const {
  const std::uint64_t keys[] = {k0, k1, k2};
  return substream(std::span<const std::uint64_t>(keys));
}

RngStream RngStream::substream(std::string_view tag) const {
  // FNV-1a over the tag, then treated as one key.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return substream(h);
}

double RngStream::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::uniform_below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_below(0)");
  // rejection to avoid modulo bias
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double RngStream::normal(double mean, double sd) {
  // polar Box-Muller, one value per call (no cached spare, keeps streams simple)
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  return mean + sd * u * std::sqrt(-2.0 * std::log(s) / s);
}

bool RngStream::bernoulli(double p) { return uniform() < p; }

int RngStream::poisson(double mean) {
  if (mean < 0.0) throw std::invalid_argument("poisson mean < 0");
  if (mean == 0.0) return 0;
  if (mean < 60.0) {
    // Knuth product method
    const double l = std::exp(-mean);
    int k = 0;
    double prod = uniform();
    while (prod > l) {
      ++k;
      prod *= uniform();
    }
    return k;
  }
  // normal approximation with continuity correction for large means
  const double x = normal(mean, std::sqrt(mean));
  return x < 0.0 ? 0 : static_cast<int>(x + 0.5);
}

double RngStream::gamma(double shape, double scale) {
  if (shape <= 0.0 || scale <= 0.0) throw std::invalid_argument("gamma parameters <= 0");
  if (shape < 1.0) {
    // Johnk boost: G(a) = G(a+1) * U^{1/a}
    const double u = uniform();
    return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
  }
  // Marsaglia-Tsang
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  while (true) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return scale * d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return scale * d * v;
  }
}

double RngStream::beta(double a, double b) {
  const double x = gamma(a);
  const double y = gamma(b);
  return x / (x + y);
}

double RngStream::lognormal(double mu, double sigma) { return std::exp(normal(mu, sigma)); }

std::size_t RngStream::categorical(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw std::invalid_argument("negative categorical weight");
    total += w;
  }
  if (total <= 0.0) throw std::invalid_argument("categorical weights sum to zero");
  double u = uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    u -= weights[i];
    if (u < 0.0) return i;
  }
  return weights.size() - 1;
}

std::vector<std::size_t> RngStream::sample_without_replacement(std::size_t n, std::size_t k) {
  if (k > n) throw std::invalid_argument("sample size exceeds population");
  std::vector<std::size_t> out;
  out.reserve(k);
  std::size_t remaining = k;
  for (std::size_t i = 0; i < n && remaining > 0; ++i) {
    const double p = static_cast<double>(remaining) / static_cast<double>(n - i);
    if (uniform() < p) {
      out.push_back(i);
      --remaining;
    }
  }
  return out;
}

}  // namespace edscreen
