#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace regimerisk {

// Seedable, splittable random source shared by every module.
//
// The engine is std::mt19937_64. Child streams are derived by hashing the
// parent seed together with a stream id through SplitMix64, so
// `Rng(seed).split(i)` is a pure function of (seed, i) and independent of how
// many draws the parent has made.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(mix(seed)) {}

  std::uint64_t seed() const noexcept { return seed_; }
  Rng split(std::uint64_t stream) const { return Rng(mix(seed_ ^ mix(stream + 0x9e3779b97f4a7c15ULL))); }

  std::mt19937_64& engine() noexcept { return engine_; }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double normal(double mean = 0.0, double sd = 1.0) { return std::normal_distribution<double>(mean, sd)(engine_); }
  double gamma(double shape) { return std::gamma_distribution<double>(shape, 1.0)(engine_); }
  std::size_t categorical(std::span<const double> probs);
  std::vector<double> dirichlet(std::span<const double> alpha);

  static std::uint64_t mix(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

double mean(std::span<const double> values);
// Sample standard deviation (divisor n - 1). Returns 0 for fewer than two values.
double sample_std(std::span<const double> values);

double normal_cdf(double x);
double normal_pdf(double x);
// Inverse of the standard normal CDF; p must lie in (0, 1).
double normal_quantile(double p);

}  // namespace regimerisk
