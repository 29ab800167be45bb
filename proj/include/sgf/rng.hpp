#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace sgf {

/// One round of the splitmix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// FNV-1a, used to derive per-filter streams from filter labels.
constexpr std::uint64_t fnv1a(std::string_view text) noexcept
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : text) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Seed for replicate r of an experiment seeded with `base`.
constexpr std::uint64_t replicate_seed(std::uint64_t base, std::uint64_t replicate) noexcept
{
    return base ^ splitmix64(replicate);
}

/// Independent sub-stream keyed by a label, e.g. a filter name.
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::string_view label) noexcept
{
    return splitmix64(seed ^ splitmix64(fnv1a(label)));
}

/// Caller-owned, explicitly seeded random source. Not thread safe; give each
/// trajectory its own instance.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    double normal() { return normal_(engine_); }

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

} // namespace sgf
