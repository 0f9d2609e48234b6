#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace stmlab {

/// Deterministic random stream. mt19937_64 output is pinned by the standard;
/// the gaussian transform is hand-rolled because std::normal_distribution is
/// free to differ between standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : eng_(seed) {}

    void reseed(std::uint64_t seed) {
        eng_.seed(seed);
        have_spare_ = false;
    }

    /// uniform in [0, 1)
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    /// standard normal via Box-Muller
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * uniform();
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    std::uint64_t raw() { return eng_(); }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace stmlab
