#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include "gkt/tensor.hpp"

namespace gkt {

/// Deterministic random stream. mt19937_64 is fully specified by the
/// standard and the uniform/normal transforms below avoid the
/// implementation-defined std distributions, so a (seed, stream) pair
/// produces the same values on every build.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Substream derivation: hashes the parent seed with a stream label and
  /// index so datagen/init/shuffle/noise streams stay independent.
  static Rng substream(std::uint64_t seed, std::string_view label, std::uint64_t index = 0) {
    std::uint64_t h = 0x9e3779b97f4a7c15ULL ^ seed;
    for (char c : label) h = splitmix(h ^ static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
    h = splitmix(h ^ index);
    return Rng(h);
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (deterministic, no cached spare).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  std::int64_t index(std::int64_t n) {
    return static_cast<std::int64_t>(engine_() % static_cast<std::uint64_t>(n));
  }

  Tensor uniform_tensor(std::vector<std::int64_t> shape, double lo, double hi) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = uniform(lo, hi);
    return t;
  }

  Tensor normal_tensor(std::vector<std::int64_t> shape, double mean = 0.0, double std = 1.0) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = mean + std * normal();
    return t;
  }

  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace gkt
