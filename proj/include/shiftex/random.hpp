#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace shiftex {

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives an independent stream seed from a tuple of integers, e.g.
/// (global_seed, party_id, window_index). Order of the tuple matters.
inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = 0x6a09e667f3bcc908ULL;
    for (auto p : parts) h = mix64(h ^ mix64(p));
    return h;
}

inline Rng make_rng(std::initializer_list<std::uint64_t> parts) {
    return Rng(derive_seed(parts));
}

/// Salts that keep derived streams for different purposes apart.
enum class Stream : std::uint64_t {
    data = 1,
    split,
    schedule,
    label_prior,
    profile,
    train,
    select,
    cluster,
    init,
    reservoir,
    null_split,
};

constexpr std::uint64_t salt(Stream s) { return static_cast<std::uint64_t>(s); }

} // namespace shiftex
