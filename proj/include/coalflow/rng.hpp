#pragma once

#include <array>
#include <cmath>
#include <cstdint>

// Counter-based random numbers (Philox4x32-10, Salmon et al. SC'11).
//
// Every variate is a pure function of (master seed, replica, counter, id, tag),
// so parallel and serial runs agree bit for bit and any draw can be recomputed
// without replaying a stream.

namespace coalflow {

namespace detail {

constexpr std::uint32_t kPhiloxW32A = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW32B = 0xBB67AE85u;
constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;

inline void philox_round(std::array<std::uint32_t, 4>& ctr, std::uint32_t k0, std::uint32_t k1) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM1) * ctr[2];
    const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
    const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
}

inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::uint32_t k0, std::uint32_t k1) {
    for (int r = 0; r < 10; ++r) {
        philox_round(ctr, k0, k1);
        k0 += kPhiloxW32A;
        k1 += kPhiloxW32B;
    }
    return ctr;
}

// splitmix64 finalizer; used to derive per-replica Philox keys from the master seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBull;
    x ^= x >> 31;
    return x;
}

// Uniform in the open interval (0,1); never returns 0 or 1.
inline double to_unit(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace detail

// Sub-stream tags keep draws for different purposes disjoint.
inline constexpr std::uint32_t kStreamMove = 0;   // particle displacement normals
inline constexpr std::uint32_t kStreamMerge = 1;  // bridge-merge uniforms
inline constexpr std::uint32_t kStreamField = 2;  // Gaussian field coefficients
inline constexpr std::uint32_t kStreamMisc = 3;

struct RngStream {
    std::uint32_t key0 = 0;
    std::uint32_t key1 = 0;

    // Splitting rule: key = splitmix64(seed ^ splitmix64(replica)).
    static RngStream for_replica(std::uint64_t master_seed, std::uint64_t replica) {
        const std::uint64_t k = detail::splitmix64(master_seed ^ detail::splitmix64(replica));
        return RngStream{static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
    }

    std::array<std::uint32_t, 4> raw(std::uint64_t ctr, std::uint32_t id, std::uint32_t tag) const {
        return detail::philox4x32({static_cast<std::uint32_t>(ctr),
                                   static_cast<std::uint32_t>(ctr >> 32), id, tag},
                                  key0, key1);
    }

    double uniform(std::uint64_t ctr, std::uint32_t id, std::uint32_t tag) const {
        const auto w = raw(ctr, id, tag);
        return detail::to_unit((static_cast<std::uint64_t>(w[1]) << 32) | w[0]);
    }

    // One standard normal per call (Box-Muller, cosine branch).
    double normal(std::uint64_t ctr, std::uint32_t id, std::uint32_t tag) const {
        const auto w = raw(ctr, id, tag);
        const double u1 = detail::to_unit((static_cast<std::uint64_t>(w[1]) << 32) | w[0]);
        const double u2 = detail::to_unit((static_cast<std::uint64_t>(w[3]) << 32) | w[2]);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }
};

}  // namespace coalflow
