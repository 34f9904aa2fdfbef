// advpe - adversarial PE manipulation toolkit
// Seeded generator with distribution helpers that are stable across standard
// libraries (the std:: distributions are implementation-defined).

#ifndef ADVPE_RNG_HPP
#define ADVPE_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace advpe {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // Uniform in [0, n).
    std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : engine_() % n; }

    // Uniform in [lo, hi].
    std::uint64_t between(std::uint64_t lo, std::uint64_t hi) { return lo + below(hi - lo + 1); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    bool chance(double p) { return uniform() < p; }

    std::uint8_t byte() { return static_cast<std::uint8_t>(engine_() & 0xff); }

    // Standard normal via Box-Muller.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace advpe

#endif  // ADVPE_RNG_HPP
