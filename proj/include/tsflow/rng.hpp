#pragma once

#include "tsflow/types.hpp"

#include <cstdint>

namespace tsflow::rng {

// Counter-based generation: every draw is a pure function of (seed, tags...),
// so results are independent of evaluation order and safe to produce from
// parallel loops. No generator state is ever shared.

// fnv-1a over the tag string, usable at compile time
constexpr std::uint64_t tag(const char* s) {
    std::uint64_t h = 1469598103934665603ull;
    for (; *s; ++s) h = (h ^ static_cast<std::uint64_t>(*s)) * 1099511628211ull;
    return h;
}

// splitmix64 finalizer
constexpr std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive(std::uint64_t seed, std::uint64_t a) { return mix(mix(seed) ^ a); }
constexpr std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return mix(derive(seed, a) ^ b);
}
constexpr std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                               std::uint64_t c) {
    return mix(derive(seed, a, b) ^ c);
}

// uniform draw in [0, 1)
double uniform01(std::uint64_t key);

// one standard normal draw (Box-Muller, cosine branch)
double gaussian(std::uint64_t key);

Vector gaussian_vector(Index n, std::uint64_t key);
Matrix gaussian_matrix(Index rows, Index cols, std::uint64_t key);

}  // namespace tsflow::rng
