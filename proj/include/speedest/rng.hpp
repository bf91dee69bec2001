#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace speedest {

/// SplitMix64 (Steele, Lea and Flood 2014). Used for every seeded draw in the
/// project so partitions and synthetic scenes reproduce bit-for-bit on any
/// platform, which the standard library distributions do not guarantee.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next()
    {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, bound) by rejection, bound > 0.
    std::uint64_t bounded(std::uint64_t bound)
    {
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const auto r = next();
            if (r >= threshold) {
                return r % bound;
            }
        }
    }

    /// Standard normal via Box-Muller (cosine branch only).
    double normal()
    {
        const double u1 = 1.0 - uniform(); // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t state_;
};

/// Derives an independent substream seed from a base seed and two keys.
inline std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0)
{
    SplitMix64 g(seed ^ (a * 0xD1B54A32D192ED03ULL));
    g.next();
    SplitMix64 h(g.next() ^ (b * 0x8CB92BA72F3D8DD7ULL));
    return h.next();
}

} // namespace speedest
