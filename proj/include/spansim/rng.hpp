#pragma once

// Deterministic, splittable random streams.
//
// Experiments need per-trial streams derived from (master seed, trial index)
// so that results are byte-identical regardless of worker count or stdlib
// version. std::uniform_real_distribution et al. are implementation-defined,
// so everything here is generated from raw 64-bit output of xoshiro256**,
// seeded via SplitMix64.

#include <array>
#include <cstdint>
#include <cmath>
#include <vector>

namespace spansim {

// SplitMix64 step; used for seeding and stream derivation.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// xoshiro256** with SplitMix64 seeding.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0x853c49e6748fea9bULL) { reseed(seed); }

    void reseed(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform double in [0, 1) with 53 bits of precision.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool bernoulli(double p) { return uniform() < p; }

    // Uniform integer in [0, n). Rejection-free modulo bias is negligible for
    // our n (≤ 2^32), but use Lemire-style rejection anyway for exactness.
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Index sampled from an (unnormalized) cumulative weight table via a
    // single uniform draw and binary search.
    std::size_t sample_cumulative(const std::vector<double>& cumulative) {
        const double u = uniform() * cumulative.back();
        std::size_t lo = 0, hi = cumulative.size() - 1;
        while (lo < hi) {
            const std::size_t mid = (lo + hi) / 2;
            if (cumulative[mid] <= u) lo = mid + 1; else hi = mid;
        }
        return lo;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }
    std::array<std::uint64_t, 4> state_{};
};

// Seed of the independent child stream for (master seed, stream index);
// exposed so result records can report the exact per-trial seed.
inline std::uint64_t derive_stream_seed(std::uint64_t master_seed,
                                        std::uint64_t stream_index) {
    std::uint64_t sm = master_seed;
    const std::uint64_t a = splitmix64(sm);
    sm ^= 0x2545f4914f6cdd1dULL * (stream_index + 1);
    const std::uint64_t b = splitmix64(sm);
    return a ^ b ^ (stream_index * 0x9e3779b97f4a7c15ULL);
}

// Derive an independent child stream from (master seed, stream index).
inline Rng derive_stream(std::uint64_t master_seed, std::uint64_t stream_index) {
    return Rng(derive_stream_seed(master_seed, stream_index));
}

}  // namespace spansim
