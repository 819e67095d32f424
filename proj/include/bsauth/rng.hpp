#pragma once

// Counter-based seed derivation. A master seed is split into independent
// streams keyed by (domain, index, sub-index) so that adding a node or a
// trial never perturbs the draws of any other stream.

#include <cstdint>
#include <random>

namespace bsauth::rng {

using Engine = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Stream domains. Values are part of the reproducibility contract.
enum class Stream : std::uint64_t {
    NodeJitter = 1,
    TraceNoise = 2,
    CollisionTrials = 3,
};

constexpr std::uint64_t derive_seed(std::uint64_t master, Stream domain, std::uint64_t index,
                                    std::uint64_t sub = 0) noexcept {
    std::uint64_t h = splitmix64(master);
    h = splitmix64(h ^ static_cast<std::uint64_t>(domain));
    h = splitmix64(h ^ index);
    return splitmix64(h ^ sub);
}

inline Engine make_engine(std::uint64_t master, Stream domain, std::uint64_t index,
                          std::uint64_t sub = 0) {
    return Engine(derive_seed(master, domain, index, sub));
}

}  // namespace bsauth::rng
