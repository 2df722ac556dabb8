#pragma once

#include <cstdint>
#include <span>
#include <utility>

namespace sskd {

/// Counter-based 64-bit generator with explicit constants, reproducible
/// bit-for-bit on any platform.
///
///   mix(z):  z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
///            z ^= z >> 27; z *= 0x94D049BB133111EB; z ^= z >> 31
///   state0 = mix(seed ^ mix(stream + 0x632BE59BD9B4E019))
///   next:    state += 0x9E3779B97F4A7C15; return mix(state)
///
/// uniform() takes the top 53 bits of next() scaled by 2^-53. normal() is
/// Box-Muller on two uniforms (one normal per call, no cached spare).
class Rng {
public:
    Rng(std::uint64_t seed, std::uint64_t stream);

    std::uint64_t next_u64();
    /// [0, 1)
    double uniform();
    /// [lo, hi)
    double uniform(double lo, double hi);
    double normal();
    /// Uniform integer in [0, n); n > 0. Uses rejection to avoid modulo bias.
    std::uint64_t below(std::uint64_t n);

    /// Fisher-Yates, walking from the back.
    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

    static std::uint64_t mix(std::uint64_t z);

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t state_;
};

} // namespace sskd
