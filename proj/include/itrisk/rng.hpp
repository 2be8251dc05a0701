#pragma once

#include <array>
#include <cstdint>

namespace itrisk {

// Stream derivation
// -----------------
// Every random draw in the library comes from a substream addressed by
// (seed, rep, purpose).  The derivation is fixed:
//
//   state = splitmix(seed)
//   state = splitmix(state ^ (0x9e3779b97f4a7c15 * (rep + 1)))
//   state = splitmix(state ^ (0xbf58476d1ce4e5b9 * (purpose + 1)))
//
// and the resulting state seeds a xoshiro256++ generator through four
// further splitmix outputs.  Distinct (rep, purpose) pairs therefore give
// independent streams of the same master seed, which is what makes
// replication-parallel runs bit-reproducible regardless of scheduling.

enum class Purpose : std::uint64_t {
    Design = 1, // rows of the design matrix X
    Noise = 2,  // the noise vector epsilon
    Sketch = 3, // Hutchinson sketch matrix W
    General = 4,
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace detail

// xoshiro256++ (Blackman & Vigna), seeded via splitmix64.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = detail::splitmix64(sm);
        // All-zero state is invalid for xoshiro; splitmix makes this
        // practically impossible but the guard costs nothing.
        if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 1;
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform double in the open interval (0, 1).
    double uniform_open() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    // Uniform sign, +1 or -1.
    double sign() { return (next_u64() >> 63) ? 1.0 : -1.0; }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }
    std::array<std::uint64_t, 4> state_{};
};

// 64-bit substream key for (seed, rep, purpose); see derivation above.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t rep, Purpose purpose) {
    std::uint64_t state = seed;
    std::uint64_t s1 = detail::splitmix64(state);
    state = s1 ^ (0x9e3779b97f4a7c15ULL * (rep + 1));
    std::uint64_t s2 = detail::splitmix64(state);
    state = s2 ^ (0xbf58476d1ce4e5b9ULL * (static_cast<std::uint64_t>(purpose) + 1));
    return detail::splitmix64(state);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t rep, Purpose purpose) {
    return Rng(derive_seed(seed, rep, purpose));
}

} // namespace itrisk
