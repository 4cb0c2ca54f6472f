#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace bavit {

/// Seeded generator whose output sequence is fixed by the mt19937_64 definition,
/// independent of the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi].
    int uniform_int(int lo, int hi) {
        const auto span = static_cast<std::uint64_t>(static_cast<std::int64_t>(hi) - lo + 1);
        return lo + static_cast<int>(engine_() % span);
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * 3.14159265358979323846 * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    /// Normal(0, std) resampled until it falls in [lo, hi].
    double truncated_normal(double std, double lo, double hi) {
        for (;;) {
            const double v = normal() * std;
            if (v >= lo && v <= hi) return v;
        }
    }

    std::uint64_t next_u64() { return engine_(); }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace bavit
