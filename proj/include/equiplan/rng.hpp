#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace equiplan {

// Deterministic random stream. Distributions are hand-rolled on top of
// mt19937_64 because the std:: distribution algorithms are
// implementation-defined; this keeps generated datasets and weight
// initializations identical across standard libraries.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Independent substream for (seed, index) pairs, e.g. one per scene.
    static Rng substream(std::uint64_t seed, std::uint64_t index) {
        return Rng(mix(seed, index));
    }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(engine_() % span);
    }

    // Standard normal via Box-Muller.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u = 0.0;
        do {
            u = uniform();
        } while (u <= 0.0);
        const double v = uniform();
        const double r = std::sqrt(-2.0 * std::log(u));
        const double a = 2.0 * M_PI * v;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double gaussian(double mean, double sigma) { return mean + sigma * gaussian(); }

    // splitmix64 finalizer; decorrelates consecutive indices.
    static std::uint64_t mix(std::uint64_t seed, std::uint64_t index) {
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

  private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace equiplan
