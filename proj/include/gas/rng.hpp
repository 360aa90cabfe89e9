#pragma once

#include <cmath>
#include <cstdint>

namespace gas {

// PCG32 (O'Neill). Self-contained so every stream is bit-reproducible across
// platforms and standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed = 0x853c49e6748fea9bULL, uint64_t seq = 0xda3e39cb94b95bdbULL) {
        reseed(seed, seq);
    }

    void reseed(uint64_t seed, uint64_t seq = 0xda3e39cb94b95bdbULL) {
        state_ = 0;
        inc_ = (seq << 1u) | 1u;
        next_u32();
        state_ += seed;
        next_u32();
        have_spare_ = false;
    }

    uint32_t next_u32() {
        uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        uint32_t xorshifted = (uint32_t)(((old >> 18u) ^ old) >> 27u);
        uint32_t rot = (uint32_t)(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((-rot) & 31));
    }

    // uniform in [0, 1)
    double uniform() { return next_u32() * (1.0 / 4294967296.0); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    uint32_t below(uint32_t n) { return n ? next_u32() % n : 0; }

    // standard normal via Box-Muller
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 1e-12) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // derive an independent stream, e.g. one per frame or per worker
    Rng fork(uint64_t key) { return Rng(((uint64_t)next_u32() << 32) ^ key, key * 2 + 1); }

private:
    uint64_t state_ = 0;
    uint64_t inc_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace gas
