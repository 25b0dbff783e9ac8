#pragma once

#include <cmath>
#include <cstdint>

namespace uhfseg {

// Counter-based splittable RNG. Streams are keyed by (seed, case, stage), so
// any case/stage can be generated independently of execution order and worker
// count with identical output. The generator itself is SplitMix64.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed, std::uint64_t case_index = 0, std::uint64_t stage = 0)
        : state_(mix(mix(mix(0x9e3779b97f4a7c15ULL ^ seed) + case_index) + stage)) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix(state_);
    }

    // Uniform in [0,1).
    double next_double() { return (next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Box-Muller; one value per call, pair cached.
    double normal(double mean = 0.0, double std = 1.0) {
        if (have_spare_) {
            have_spare_ = false;
            return mean + std * spare_;
        }
        double u1, u2;
        do {
            u1 = next_double();
        } while (u1 <= 0.0);
        u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * 3.141592653589793238462643383279502884 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return mean + std * r * std::cos(theta);
    }

    std::uint64_t next_below(std::uint64_t n) { return n ? next_u64() % n : 0; }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace uhfseg
