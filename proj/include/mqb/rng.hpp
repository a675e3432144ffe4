#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace mqb {

namespace detail {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace detail

/// Stable 64-bit FNV-1a of a label; used to turn purpose/algorithm names into stream keys.
inline constexpr std::uint64_t label_key(std::string_view label) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : label) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

/// A deterministic random stream. Copying a stream copies its state, so a copy
/// replays exactly the same draws.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed = 0) : engine_(seed) {}

    /// Stream keyed by an ordered tuple, e.g. (master_seed, run, instance, purpose).
    /// Distinct tuples give statistically independent streams.
    static RngStream keyed(std::initializer_list<std::uint64_t> key) {
        std::uint64_t h = 0x6A09E667F3BCC909ULL;
        for (std::uint64_t k : key) h = detail::splitmix64(h ^ detail::splitmix64(k));
        return RngStream(h);
    }

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }

    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n) {
        std::uniform_int_distribution<std::size_t> dist(0, n - 1);
        return dist(engine_);
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace mqb
