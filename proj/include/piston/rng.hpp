#pragma once

#include <cstdint>
#include <random>

#include "piston/vec.hpp"

namespace piston {

/// splitmix64 step; used to decorrelate derived seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seeded random source. Wraps the standard mt19937_64 engine (its output
/// sequence is fully specified by the standard) and derives all variates
/// from raw 64-bit draws, so results are reproducible across platforms.
/// std::uniform_real_distribution and friends are deliberately avoided:
/// their outputs are implementation-defined.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t bits() { return engine_(); }

    /// Uniform in [0, 1) with 53-bit resolution.
    double uniform01() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

    double uniform(double a, double b) { return a + (b - a) * uniform01(); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // modulo with rejection to remove bias
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t x;
        do {
            x = bits();
        } while (x >= limit);
        return x % n;
    }

    /// Uniform direction on the unit circle (2D) or sphere (3D).
    template <int D>
    Vec<D> unit_vector() {
        if constexpr (D == 2) {
            const double a = uniform(0.0, 2.0 * M_PI);
            return {{std::cos(a), std::sin(a)}};
        } else {
            const double z = uniform(-1.0, 1.0);
            const double a = uniform(0.0, 2.0 * M_PI);
            const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
            return {{r * std::cos(a), r * std::sin(a), z}};
        }
    }

  private:
    std::mt19937_64 engine_;
};

}  // namespace piston
