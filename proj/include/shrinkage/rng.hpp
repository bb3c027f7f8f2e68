#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "shrinkage/error.hpp"

namespace shrinkage {

namespace detail {

// splitmix64 step; used only for seeding/stream derivation.
inline std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace detail

// Deterministic random stream. mt19937_64 produces a bit-stable sequence by
// the standard; every distribution transform is written out here so results
// do not depend on the standard library's unspecified distribution algorithms.
class RngStream {
  public:
    explicit RngStream(std::uint64_t seed) : seed_(seed) {
        std::uint64_t s = seed;
        engine_.seed(detail::splitmix64(s));
    }

    std::uint64_t seed() const { return seed_; }

    // Independent child stream; the derivation depends only on (seed, index).
    RngStream split(std::uint64_t index) const {
        std::uint64_t s = seed_;
        std::uint64_t mixed = detail::splitmix64(s) ^ (index + 1) * 0x9E3779B97F4A7C15ULL;
        return RngStream(detail::splitmix64(mixed));
    }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on (0, 1): 53-bit mantissa, zero excluded so logs stay finite.
    double uniform() {
        double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
        return u > 0.0 ? u : 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller (no cached second value: the stream
    // state stays a pure function of how many variates were drawn).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    // Bernoulli indicator with success probability p.
    double bernoulli(double p) {
        if (p < 0.0 || p > 1.0) throw DomainError("bernoulli: p must lie in [0,1]");
        if (p <= 0.0) return 0.0;
        if (p >= 1.0) return 1.0;
        return uniform() < p ? 1.0 : 0.0;
    }

    // Rayleigh with scale s: inverse CDF, x = s*sqrt(-2 ln(1-u)).
    double rayleigh(double s) {
        return s * std::sqrt(-2.0 * std::log1p(-uniform()));
    }

    // Half-Cauchy with scale b: |b tan(pi (u - 1/2))|.
    double half_cauchy(double b) {
        return std::abs(b * std::tan(M_PI * (uniform() - 0.5)));
    }

    // Gamma(shape, scale) via Marsaglia-Tsang; shape < 1 boosted by U^{1/shape}.
    double gamma(double shape, double scale) {
        if (shape <= 0.0 || scale <= 0.0) throw DomainError("gamma: shape and scale must be positive");
        if (shape < 1.0) {
            double u = uniform();
            return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
        }
        double d = shape - 1.0 / 3.0;
        double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return scale * d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return scale * d * v;
        }
    }

    // Inverse-gamma(shape a, scale b): reciprocal of Gamma(a, 1/b).
    double inverse_gamma(double a, double b) { return b / gamma(a, 1.0); }

  private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace shrinkage
