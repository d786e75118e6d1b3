#pragma once

#include <array>
#include <cstdint>

namespace stoic {

/// splitmix64 step; used to expand seeds and derive substreams.
inline uint64_t splitmix64(uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Derives an independent stream seed from (seed, stream index).
inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
    uint64_t s = seed;
    uint64_t a = splitmix64(s);
    s = seed ^ (0x9e3779b97f4a7c15ull + stream * 0xd1342543de82ef95ull);
    uint64_t b = splitmix64(s);
    return a ^ (b + 0x165667b19e3779f9ull);
}

/// xoshiro256** generator with explicit, serializable state.
///
/// Every random draw in the project goes through this type, so results are
/// reproducible bit-for-bit given a seed, independent of the standard
/// library's distribution implementations.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) {
        uint64_t s = seed;
        for (auto& w : state_) w = splitmix64(s);
    }

    static Rng from_state(const std::array<uint64_t, 4>& st) {
        Rng r(0);
        r.state_ = st;
        return r;
    }

    uint64_t next_u64() {
        auto rotl = [](uint64_t x, int k) { return (x << k) | (x >> (64 - k)); };
        const uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [lo, hi], inclusive.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t range = static_cast<uint64_t>(hi - lo) + 1;
        uint64_t v = static_cast<uint64_t>((static_cast<__uint128_t>(next_u64()) * range) >> 64);
        return lo + static_cast<int64_t>(v);
    }

    /// Standard normal via Box-Muller (cosine branch, no cached spare, so the
    /// generator state alone determines the sequence).
    double normal();

    /// Normal with given stddev, redrawn until |z| <= cutoff stddevs.
    double truncated_normal(double stddev, double cutoff = 2.0) {
        double z;
        do {
            z = normal();
        } while (z < -cutoff || z > cutoff);
        return z * stddev;
    }

    const std::array<uint64_t, 4>& state() const { return state_; }
    void set_state(const std::array<uint64_t, 4>& st) { state_ = st; }

private:
    std::array<uint64_t, 4> state_{};
};

}  // namespace stoic
