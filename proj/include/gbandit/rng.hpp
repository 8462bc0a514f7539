#pragma once

#include <cstdint>

namespace gbandit {

// What a stream is drawing for. Folded into the stream key so that, e.g., the
// perturbation draws of round t never shift when an unrelated reward draw is
// added or removed.
enum class StreamPurpose : std::uint64_t {
    perturbation = 1,
    reward = 2,
    warm_perturbation = 3,
    warm_reward = 4,
    condition_sampling = 5,
    audit = 6,
};

// Counter-based deterministic generator (splitmix64 over a hashed key).
// A stream is fully identified by (seed, round, arm, purpose): replaying any
// one of them yields identical draws regardless of what other streams were
// consumed, and the mapping is pure integer arithmetic, so it is reproducible
// across platforms and thread schedules. Rounds may be negative (warm-start
// pseudo-rounds).
class RngStream {
public:
    RngStream(std::uint64_t seed, std::int64_t round, std::uint64_t arm, StreamPurpose purpose) {
        std::uint64_t h = mix(seed + 0x9E3779B97F4A7C15ull);
        h = mix(h ^ (static_cast<std::uint64_t>(round) + 0xBF58476D1CE4E5B9ull));
        h = mix(h ^ (arm + 0x94D049BB133111EBull));
        h = mix(h ^ (static_cast<std::uint64_t>(purpose) + 0xD6E8FEB86659FD93ull));
        state_ = h;
    }

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        return mix(state_);
    }

    // Uniform on [0, 1), 53-bit resolution.
    double next_uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform on the open interval (0, 1); safe to feed to an inverse CDF.
    double next_uniform_oo() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ull;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBull;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t state_;
};

} // namespace gbandit
