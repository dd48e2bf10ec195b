#pragma once

// Counter-based keyed generator. A stream is identified by a key derived from
// (seed, ids...); the value at position i is a pure function of (key, i), so
// trials and rounds can be generated in any order or in parallel and still
// produce the same numbers.

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace providence::rng {

// The SplitMix64 output function.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

class KeyedStream {
public:
    using result_type = std::uint64_t;

    constexpr KeyedStream(std::uint64_t seed, std::initializer_list<std::uint64_t> ids)
        : key_(mix64(seed + kGolden)) {
        for (std::uint64_t id : ids) key_ = mix64(key_ ^ mix64(id + kGolden));
    }

    constexpr std::uint64_t key() const { return key_; }

    // Random access.
    constexpr std::uint64_t at(std::uint64_t index) const { return mix64(key_ + (index + 1) * kGolden); }
    // Uniform double in [0, 1) with 53 random bits.
    constexpr double uniform_at(std::uint64_t index) const {
        return static_cast<double>(at(index) >> 11) * 0x1.0p-53;
    }

    // Sequential use as a UniformRandomBitGenerator.
    std::uint64_t operator()() { return at(counter_++); }
    double uniform() { return uniform_at(counter_++); }
    std::uint64_t position() const { return counter_; }
    void seek(std::uint64_t index) { counter_ = index; }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

// Uniform integer in [0, bound) via Lemire's multiply-shift reduction; the
// bias is below 2^-64 * bound, negligible at electorate sizes.
constexpr std::uint64_t bounded(std::uint64_t bits, std::uint64_t bound) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(bits) * bound) >> 64);
}

}  // namespace providence::rng
