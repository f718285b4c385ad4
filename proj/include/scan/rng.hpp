#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace scan {

/// Deterministic 64-bit PRNG used everywhere randomness is needed.
///
/// The generator is SplitMix64 (Steele, Lea & Flood; Vigna's reference
/// constants): the state advances along a Weyl sequence with increment
/// 0x9E3779B97F4A7C15 and each output is a bit-mixing finalizer of the new
/// state. The integer stream is a pure function of the seed and is therefore
/// identical on every platform. Real-valued draws (uniform doubles, normals)
/// are derived from the integer stream with fixed formulas; they are
/// bit-identical wherever libm rounds log/cos identically, which holds on all
/// supported targets and is covered by the golden-stream test.
///
/// Instances are cheap value types. Never share one across threads; derive an
/// independent stream per worker with fork() instead.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Unbiased uniform integer in [0, n). n == 0 is invalid.
    std::uint64_t next_below(std::uint64_t n) {
        // Rejection from the top so every residue is equally likely.
        std::uint64_t threshold = (0ull - n) % n;
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    /// Standard normal via Box-Muller. Consumes exactly two integer draws so
    /// the stream position stays easy to reason about (no cached spare).
    double next_normal() {
        double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
        double u2 = next_double();                                              // [0, 1)
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    /// Uniform double in [lo, hi).
    double next_range(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    /// Independent child stream. Mixes the current state with a tag without
    /// consuming draws from this stream.
    Rng fork(std::uint64_t tag) const {
        Rng child(state_ ^ (0xBF58476D1CE4E5B9ull * (tag + 0x9E3779B97F4A7C15ull)));
        child.next_u64();
        return child;
    }

    std::uint64_t state() const { return state_; }
    void set_state(std::uint64_t s) { state_ = s; }

private:
    std::uint64_t state_;
};

/// FNV-1a hash of a label, used to derive named sub-seeds deterministically.
inline std::uint64_t hash_tag(std::string_view tag) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ull;
    }
    return h;
}

/// Stable seed derivation: one master seed, one tag (plus optional index)
/// per independent consumer. Documented so runs can be reproduced by hand.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) {
    Rng r(seed ^ hash_tag(tag));
    r.set_state(r.state() + 0x9E3779B97F4A7C15ull * index);
    return r.next_u64();
}

}  // namespace scan
