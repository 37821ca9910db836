#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace m3ace {

// Deterministic random streams keyed by logical position, not call order.
//
// Every stochastic draw in the simulator is taken from a stream derived
// from (seed, problem_id, agent_id, round, salt). Two runs with the same
// seed produce byte-identical output regardless of thread scheduling or
// parallelism, because no stream is shared across problems.

// FNV-1a, 64-bit. Stable across platforms, good enough for stream keys.
constexpr std::uint64_t fnv1a(std::string_view text, std::uint64_t h = 1469598103934665603ULL) {
    for (const char c : text) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

constexpr std::uint64_t fnv1a_u64(std::uint64_t value, std::uint64_t h) {
    for (int i = 0; i < 8; ++i) {
        h ^= value & 0xffULL;
        h *= 1099511628211ULL;
        value >>= 8;
    }
    return h;
}

// SplitMix64: tiny, fast, passes BigCrush as a 64-bit mixer. Each stream
// owns its own state so draws never interleave between streams.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform in [0, n).
    std::uint64_t next_below(std::uint64_t n) { return n == 0 ? 0 : next() % n; }

    bool bernoulli(double p) { return next_double() < p; }

private:
    std::uint64_t state_;
};

// Derives the stream for one (problem, agent, round, purpose) cell.
inline SplitMix64 stream_for(std::uint64_t seed,
                             std::string_view problem_id,
                             std::string_view agent_id,
                             int round,
                             std::string_view salt) {
    std::uint64_t h = fnv1a_u64(seed, 1469598103934665603ULL);
    h = fnv1a(problem_id, h);
    h = fnv1a("|", h);
    h = fnv1a(agent_id, h);
    h = fnv1a_u64(static_cast<std::uint64_t>(round), h);
    h = fnv1a(salt, h);
    return SplitMix64(h);
}

// Stable per-problem value used by the simulator to place ground truth.
inline std::uint64_t problem_hash(std::string_view problem_id, std::string_view salt) {
    std::uint64_t h = fnv1a(problem_id);
    h = fnv1a("#", h);
    h = fnv1a(salt, h);
    return h;
}

} // namespace m3ace
