#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <string_view>

namespace incdyn {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace detail

/// FNV-1a over bytes. Stable across platforms, unlike std::hash.
constexpr std::uint64_t fnv1a64(std::string_view bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Small splitmix64 generator satisfying UniformRandomBitGenerator.
///
/// Substreams are keyed, so a draw depends only on (seed, keys...) and never
/// on the order in which other substreams were consumed.
class SubstreamRng {
public:
    using result_type = std::uint64_t;

    explicit SubstreamRng(std::uint64_t state) noexcept : state_{state} {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_;
};

/// Seed for the income shock stream. Draws are iid N(0, 1).
struct NoiseSpec {
    std::uint64_t seed = 0;

    template <typename... Keys>
    [[nodiscard]] SubstreamRng substream(Keys... keys) const noexcept {
        std::uint64_t s = detail::splitmix64(seed);
        ((s = detail::splitmix64(s ^ static_cast<std::uint64_t>(keys))), ...);
        return SubstreamRng{s};
    }

    /// One standard normal draw for a keyed substream.
    template <typename... Keys>
    [[nodiscard]] double normal(Keys... keys) const {
        auto rng = substream(keys...);
        std::normal_distribution<double> dist{0.0, 1.0};
        return dist(rng);
    }
};

} // namespace incdyn
