#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

namespace kws {

/// FNV-1a, used to key RNG streams by file id portably (std::hash is
/// implementation-defined and would break manifest reproducibility).
inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

/// Derives independent RNG streams from a base seed; also a decent mixer.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Deterministic Gaussian source. Box-Muller over mt19937_64 keeps output
/// bit-identical across standard libraries, unlike std::normal_distribution.
class GaussianRng {
  public:
    explicit GaussianRng(uint64_t seed) : engine_(seed) {}

    double uniform() {  // [0, 1)
        return (engine_() >> 11) * 0x1.0p-53;
    }

    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double phi = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(phi);
        have_spare_ = true;
        return r * std::cos(phi);
    }

    /// Circularly symmetric complex Gaussian with E|z|^2 = 1.
    std::complex<double> complex_gaussian() {
        constexpr double kHalfSqrt2 = 0.7071067811865476;
        const double re = gaussian() * kHalfSqrt2;
        const double im = gaussian() * kHalfSqrt2;
        return {re, im};
    }

    uint64_t next_u64() { return engine_(); }

  private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace kws
