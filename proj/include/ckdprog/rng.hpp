#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace ckdprog {

// splitmix64, used for seed expansion and stream derivation.
struct SplitMix64 {
    uint64_t state;

    explicit SplitMix64(uint64_t seed) : state(seed) {}

    uint64_t next() {
        uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }
};

// PCG32 (pcg_setseq_64_xsh_rr_32). Portable, 64-bit state, explicit stream
// selection. All randomness in this project flows through this generator so
// that outputs are identical across platforms.
class Pcg32 {
   public:
    Pcg32(uint64_t seed, uint64_t stream = 0) {
        inc_ = (stream << 1u) | 1u;
        state_ = 0;
        next_u32();
        state_ += seed;
        next_u32();
    }

    uint32_t next_u32() {
        uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
        uint32_t rot = static_cast<uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
    }

    // Uniform double in [0, 1), 32 bits of resolution.
    double uniform() { return next_u32() * 0x1p-32; }

    // Uniform double in (0, 1]; safe as a log() argument.
    double uniform_pos() { return (static_cast<double>(next_u32()) + 1.0) * 0x1p-32; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Inclusive integer range. Multiply-shift mapping; the (negligible) bias
    // does not matter here, determinism does.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t range = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int64_t>((static_cast<uint64_t>(next_u32()) * range) >> 32);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller with cached second draw.
    double gauss() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform_pos();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    double gauss(double mean, double sd) { return mean + sd * gauss(); }

    // Standard normal truncated to [-2, 2] by rejection.
    double truncated_gauss2() {
        for (;;) {
            double z = gauss();
            if (z >= -2.0 && z <= 2.0) return z;
        }
    }

   private:
    uint64_t state_ = 0;
    uint64_t inc_ = 1;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

// Derives a named child seed from a base seed. Used to give each pipeline
// stage (and each grid cell) its own documented substream of the master seed.
inline uint64_t derive_seed(uint64_t base, std::string_view tag) {
    return SplitMix64(base ^ fnv1a64(tag)).next();
}

inline uint64_t derive_seed(uint64_t base, std::string_view tag, uint64_t index) {
    return SplitMix64(base ^ fnv1a64(tag) ^ (0x9E3779B97F4A7C15ULL * (index + 1))).next();
}

}  // namespace ckdprog
