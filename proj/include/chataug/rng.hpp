#pragma once

// Deterministic RNG primitives. The standard distributions are
// implementation-defined, so everything that must reproduce byte-identical
// output across platforms goes through these.

#include <cstdint>
#include <string_view>

namespace chataug {

struct SplitMix64 {
    std::uint64_t state = 0;

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, n); n >= 1.
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(next() % n); }

    /// Uniform in [0, 1).
    double unit() { return static_cast<double>(next() >> 11) / 9007199254740992.0; }
};

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xCBF29CE484222325ull) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

/// RNG keyed on the generation context, so reruns and resumes reproduce the
/// exact same transcript for a pair.
inline SplitMix64 rng_for_completion(std::uint64_t corpus_seed, std::string_view seed_post_id,
                                     std::size_t epoch) {
    std::uint64_t h = fnv1a64(seed_post_id);
    h = fnv1a64("|", h);
    h ^= corpus_seed + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(epoch) + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
    return SplitMix64{h};
}

}  // namespace chataug
