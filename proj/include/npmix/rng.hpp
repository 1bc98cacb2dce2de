#pragma once

#include <cmath>
#include <cstdint>

namespace npmix {

/// Counter-based random generator. The output stream is a pure function of
/// (seed, stream, counter), so forked generators are independent of scheduling
/// order and replicate results are reproducible under any parallel layout.
class CounterRng {
public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(mix(mix(seed + 0x9E3779B97F4A7C15ull) ^ mix(stream + 0xD1B54A32D192ED03ull))) {}

  /// Independent generator for a substream (replicate index, component id, ...).
  CounterRng fork(std::uint64_t stream) const {
    CounterRng out(0, 0);
    out.key_ = mix(key_ ^ mix(stream + 0x8CB92BA72F3D8DD7ull));
    out.counter_ = 0;
    out.have_cached_gauss_ = false;
    return out;
  }

  std::uint64_t next_u64() { return mix(key_ + (++counter_) * 0x9E3779B97F4A7C15ull); }

  /// Uniform on [0, 1).
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1]; safe as a log argument.
  double next_double_pos() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

  double next_gaussian() {
    if (have_cached_gauss_) {
      have_cached_gauss_ = false;
      return cached_gauss_;
    }
    const double u1 = next_double_pos();
    const double u2 = next_double();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 6.283185307179586476925287 * u2;
    cached_gauss_ = radius * std::sin(angle);
    have_cached_gauss_ = true;
    return radius * std::cos(angle);
  }

  double next_exponential(double rate) { return -std::log(next_double_pos()) / rate; }

  /// Exact Poisson draw by additivity: Knuth's product method on chunks of
  /// mean at most 30, so large means stay exact without normal approximation.
  long next_poisson(double mean) {
    long total = 0;
    while (mean > 30.0) {
      total += poisson_knuth(30.0);
      mean -= 30.0;
    }
    return total + poisson_knuth(mean);
  }

private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
  }

  long poisson_knuth(double mean) {
    const double limit = std::exp(-mean);
    long k = 0;
    double prod = 1.0;
    do {
      ++k;
      prod *= next_double_pos();
    } while (prod > limit);
    return k - 1;
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double cached_gauss_ = 0.0;
  bool have_cached_gauss_ = false;
};

}  // namespace npmix
