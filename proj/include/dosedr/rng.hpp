#pragma once

#include <cstdint>
#include <random>

namespace dosedr {

//! SplitMix64 step; used to derive independent substream seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

//! Deterministic substream seed from a base seed and stream indices.
//! Distinct (base, i, j) triples map to well-separated engine seeds, so
//! replications can run in parallel without sharing generator state.
inline std::uint64_t substream_seed(std::uint64_t base, std::uint64_t i, std::uint64_t j = 0) {
    std::uint64_t s = base;
    std::uint64_t h = splitmix64(s);
    s ^= i * 0x9e3779b97f4a7c15ULL + h;
    h = splitmix64(s);
    s ^= j * 0xd1b54a32d192ed03ULL + h;
    return splitmix64(s);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t base, std::uint64_t i = 0, std::uint64_t j = 0) {
    return Rng(substream_seed(base, i, j));
}

} // namespace dosedr
