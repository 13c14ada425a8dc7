#pragma once

#include <cmath>
#include <cstdint>

namespace advml {

inline constexpr double kPi = 3.14159265358979323846;

// SplitMix64 stream. Small, stateful by value, identical output for an
// identical seed on every platform. Single-owner: never share one instance
// across threads; derive child streams with child() instead.
class RngState {
public:
    explicit RngState(std::uint64_t seed) : seed_(seed), state_(seed) {}

    std::uint64_t seed() const { return seed_; }

    // One SplitMix64 step.
    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix(state_);
    }

    // Uniform in [0,1) from the high 53 bits.
    double next_uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Standard Gaussian via Box-Muller over the uniform stream.
    // Draws two uniforms, returns one deviate and caches the other.
    double next_gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // u1 in (0,1] so the log argument never hits zero.
        const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = next_uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * kPi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    // Child stream i: seeded with mix(parent_seed + i). Children of the same
    // parent with distinct indices are independent for practical purposes.
    RngState child(std::uint64_t stream_index) const {
        return RngState(mix(seed_ + stream_index));
    }

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t seed_;
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace advml
