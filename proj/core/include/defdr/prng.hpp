#pragma once

#include <cmath>
#include <cstdint>

namespace defdr {

// splitmix64 generator. Small state, platform-independent streams, and
// cheap to fork, which is all the experiment harness needs. Not shared
// across threads; callers fork per-lane generators instead.
class Prng {
public:
    explicit Prng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0,1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    // Uniform integer in [lo, hi], inclusive. Fixed-point multiply keeps
    // the mapping identical on every platform.
    int uniform_int(int lo, int hi) {
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        uint64_t x = next_u64();
        uint64_t v = static_cast<uint64_t>(
            (static_cast<unsigned __int128>(x) * span) >> 64);
        return lo + static_cast<int>(v);
    }

    // Standard normal via Box-Muller; consumes exactly two draws.
    double normal() {
        double u1 = next_double();
        double u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(1.0 - u1));
        return r * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Independent child stream. Derivation depends only on the current
    // state and the stream index, so fan-out is schedule-independent.
    Prng fork(uint64_t stream) const {
        Prng mixer(state_ ^ (0xA0761D6478BD642FULL * (stream + 1)));
        return Prng(mixer.next_u64());
    }

    uint64_t state() const { return state_; }

private:
    uint64_t state_;
};

}  // namespace defdr
