#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string_view>

namespace surcol {

// Deterministic random source. All draws go through explicit conversions of
// the raw engine output so streams are reproducible across compilers and
// standard libraries (std::uniform_*_distribution is implementation-defined).
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    // Uniform double in [0, 1).
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    // Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi], inclusive, via rejection sampling.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
        const std::uint64_t reject_above = std::uint64_t(-1) - std::uint64_t(-1) % range;
        std::uint64_t draw = eng_();
        while (draw >= reject_above) draw = eng_();
        return lo + static_cast<std::int64_t>(draw % range);
    }

    // Uniform point on the 2-simplex via sorted uniform spacings
    // (equivalent to Dirichlet(1,1,1)).
    std::array<double, 3> simplex3() {
        double a = uniform();
        double b = uniform();
        if (a > b) std::swap(a, b);
        return {a, b - a, 1.0 - b};
    }

    // Standard normal via Box-Muller (both values consumed, only one kept).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    std::uint64_t raw() { return eng_(); }

    // Derives a named substream seed from a root seed, so every pipeline
    // stage draws from its own independent stream.
    static std::uint64_t substream(std::uint64_t seed, std::string_view name) {
        std::uint64_t h = 1469598103934665603ull;  // FNV-1a
        for (const char c : name) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ull;
        }
        return splitmix(seed ^ h);
    }

    static std::uint64_t splitmix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

  private:
    std::mt19937_64 eng_;
};

}  // namespace surcol
