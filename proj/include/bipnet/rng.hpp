#pragma once

#include <cstdint>
#include <random>

namespace bipnet {

using RngStream = std::mt19937_64;

// splitmix64 finalizer; used to derive independent per-replication seeds.
inline std::uint64_t mix_seed(std::uint64_t master, std::uint64_t index) {
    std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline RngStream make_stream(std::uint64_t master, std::uint64_t index) {
    return RngStream(mix_seed(master, index));
}

} // namespace bipnet
