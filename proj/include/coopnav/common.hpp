#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace coopnav {

/// 64-bit FNV-1a. Used for manifest hashes and for deriving named RNG streams.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Seeded random stream. Distribution sampling is implemented here rather than
// with std:: distributions so that sequences depend only on the engine, not on
// the standard library version.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    std::uint64_t bits() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be > 0.
    std::size_t index(std::size_t n) {
        return std::size_t((unsigned __int128)engine_() * n >> 64);
    }

    /// Standard normal via Box-Muller (one draw per call, no pair cache).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    double normal(double mean, double std) { return mean + std * normal(); }

    /// Independent stream derived from this seed and a purpose tag.
    static Rng derive(std::uint64_t seed, std::string_view tag) {
        return Rng(splitmix64(seed) ^ fnv1a64(tag));
    }

  private:
    std::mt19937_64 engine_;
};

inline double clamp01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

}  // namespace coopnav
