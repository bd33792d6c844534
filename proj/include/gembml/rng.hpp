#pragma once

#include <cstdint>
#include <random>

#include "gembml/types.hpp"

namespace gembml {

/// splitmix64 finalizer; decorrelates derived seeds.
inline uint64_t mix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Deterministic child-seed derivation. Every parallel work item gets its seed
/// from (run seed, structural indices), never from shared RNG state, so results
/// do not depend on execution order.
inline uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    uint64_t h = mix64(base);
    h = mix64(h ^ (a + 0x100000001b3ULL));
    h = mix64(h ^ (b + 0x100000001b5ULL));
    h = mix64(h ^ (c + 0x100000001b7ULL));
    return h;
}

using Rng = std::mt19937_64;

inline Vec standard_normal_vec(Rng& rng, size_t n) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Vec v(n);
    for (auto& x : v) x = nd(rng);
    return v;
}

}  // namespace gembml
