#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace refseg {

/// Counter-based deterministic RNG (SplitMix64 core). A generator is identified
/// by (seed, stream); identical identities produce identical sequences on every
/// platform. Child streams are derived from labels without touching the parent,
/// so derivation is order-independent and safe to hand out to parallel workers.
class SeededRng {
public:
    explicit SeededRng(uint64_t seed, uint64_t stream = 0)
        : seed_(seed), stream_(stream), state_(mix64(seed ^ mix64(stream ^ kStreamSalt))) {}

    uint64_t seed() const { return seed_; }
    uint64_t stream() const { return stream_; }

    uint64_t next_u64() {
        state_ += kGolden;
        return mix64(state_);
    }

    /// Uniform in [0, 1), 53-bit resolution.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    float next_float() { return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f; }

    /// Uniform integer in [0, n). n must be nonzero.
    uint64_t next_below(uint64_t n) {
        // Lemire multiply-shift reduction; bias is negligible for n << 2^64.
        return static_cast<uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    /// Standard normal via Box-Muller. Always consumes exactly two draws.
    double next_normal() {
        double u1 = next_double();
        double u2 = next_double();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Child stream for `label`. Depends only on (seed, stream, label), never on
    /// how much the parent has been consumed.
    SeededRng derive(std::string_view label) const {
        uint64_t h = fnv1a64(label);
        return SeededRng(seed_, mix64(stream_ ^ (h * kGolden) ^ kDeriveSalt));
    }

    static uint64_t mix64(uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    static uint64_t fnv1a64(std::string_view s) {
        uint64_t h = 0xCBF29CE484222325ull;
        for (char c : s) {
            h ^= static_cast<uint8_t>(c);
            h *= 0x100000001B3ull;
        }
        return h;
    }

private:
    static constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ull;
    static constexpr uint64_t kStreamSalt = 0x6A09E667F3BCC909ull;
    static constexpr uint64_t kDeriveSalt = 0xBB67AE8584CAA73Bull;

    uint64_t seed_;
    uint64_t stream_;
    uint64_t state_;
};

}  // namespace refseg
