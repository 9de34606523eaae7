#pragma once
#include <cstdint>
#include <random>

namespace emx {

// splitmix64 finalizer: cheap, well-mixed 64-bit hash used to derive independent
// task seeds from (base_seed, stream ids...) without coupling between streams.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed) { return splitmix64(seed); }

template <class... Rest>
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t head, Rest... rest) {
    return derive_seed(splitmix64(seed ^ (head + 0x9e3779b97f4a7c15ULL)), rest...);
}

inline std::mt19937_64 make_engine(std::uint64_t seed) { return std::mt19937_64(splitmix64(seed)); }

}  // namespace emx
