#include "stmlab/junction.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

using namespace stmlab;
namespace junc = stmlab::junction;

namespace {
Site make_site(double phi, std::array<double, 8> conduct) {
    Site s;
    s.phi_ev = phi;
    s.conduct = conduct;
    return s;
}

/// Fourier coefficients of f(v_dc + vm sin(theta)) by trapezoidal quadrature,
/// exact for trigonometric polynomials below the grid's Nyquist order.
std::vector<double> fourier_oracle(const Site& s, double gap, double v_dc, double vm, int n_max) {
    const int m = 4096;
    std::vector<double> out(n_max + 1, 0.0);
    const double atten = std::exp(-junc::k_gap_decay * gap * std::sqrt(s.phi_ev));
    for (int k = 0; k < m; ++k) {
        const double theta = 2.0 * std::numbers::pi * k / m;
        const double f = junc::conductance(s, v_dc + vm * std::sin(theta)) * atten;
        out[0] += f / m;
        for (int n = 1; n <= n_max; ++n) {
            const double ref = (n % 2 == 1) ? std::sin(n * theta) : std::cos(n * theta);
            out[n] += 2.0 * f * ref / m;
        }
    }
    return out;
}
} // namespace

TEST_CASE("0.1 angstrom of gap cuts the current by 20% at phi = 4.74 eV") {
    const Site s = make_site(4.74, {1e-9, 0, 0, 0, 0, 0, 0, 0});
    const double i1 = junc::tunneling_current(5.0, 1.0, s);
    const double i2 = junc::tunneling_current(5.1, 1.0, s);
    CHECK(i2 / i1 == doctest::Approx(0.80).epsilon(1e-3));
    CHECK(i2 / i1 == doctest::Approx(std::exp(-1.025 * 0.1 * std::sqrt(4.74))).epsilon(1e-12));
}

TEST_CASE("log-current slope is exactly -1.025 sqrt(phi)") {
    for (double phi : {1.0, 2.0, 4.0, 4.74}) {
        const Site s = make_site(phi, {2e-9, 0, 0, 0, 0, 0, 0, 0});
        const double d1 = 4.0, d2 = 6.5;
        const double slope =
            (std::log(junc::tunneling_current(d2, 0.3, s)) - std::log(junc::tunneling_current(d1, 0.3, s))) /
            (d2 - d1);
        CHECK(slope == doctest::Approx(-1.025 * std::sqrt(phi)).epsilon(1e-12));
        CHECK(junc::log_current_slope(s) == doctest::Approx(-1.025 * std::sqrt(phi)).epsilon(1e-12));
    }
}

TEST_CASE("barrier estimate round-trips phi within the constant mismatch") {
    const Site s = make_site(4.0, {1e-9, 0, 0, 0, 0, 0, 0, 0});
    const double est = junc::barrier_from_slope(junc::log_current_slope(s));
    CHECK(est == doctest::Approx(4.000778).epsilon(2e-6));
    CHECK(std::abs(est / 4.0 - 1.0) < 3e-4);
}

TEST_CASE("closed gap raises a crash error") {
    const Site s = make_site(4.0, {1e-9, 0, 0, 0, 0, 0, 0, 0});
    CHECK_THROWS_AS(junc::tunneling_current(0.0, 1.0, s), TipCrashError);
    CHECK_THROWS_AS(junc::tunneling_current(-0.5, 1.0, s), TipCrashError);
}

TEST_CASE("query form subtracts the local height") {
    Site s = make_site(4.0, {1e-9, 0, 0, 0, 0, 0, 0, 0});
    s.height_ang = 2.0;
    const JunctionQuery q{0.0, 0.0, 7.0, -2.5};
    CHECK(junc::tunneling_current(q, s) == doctest::Approx(junc::tunneling_current(5.0, -2.5, s)).epsilon(1e-15));
}

TEST_CASE("capacitive current amplitude and quadrature shape") {
    const double c = 1e-12, vm = 2.5, f = 2000.0;
    const double w = 2.0 * std::numbers::pi * f;
    CHECK(junc::capacitive_current(c, vm, w, 0.0) == doctest::Approx(3.1416e-8).epsilon(1e-4));
    CHECK(junc::capacitive_current(c, vm, w, std::numbers::pi / (2.0 * w)) ==
          doctest::Approx(0.0).epsilon(1e-20));
    CHECK(junc::capacitive_current(c, 0.0, w, 0.123) == 0.0);
}

TEST_CASE("polynomial conductance and its derivatives") {
    const Site s = make_site(4.0, {0.5, 1.0, 0.0, 0.25, 0, 0, 0, 0});
    CHECK(junc::conductance(s, 2.0) == doctest::Approx(0.5 + 2.0 + 2.0));
    CHECK(junc::conductance_derivative(s, 2.0, 0) == doctest::Approx(junc::conductance(s, 2.0)));
    CHECK(junc::conductance_derivative(s, 2.0, 1) == doctest::Approx(1.0 + 3.0 * 0.25 * 4.0));
    CHECK(junc::conductance_derivative(s, 2.0, 2) == doctest::Approx(6.0 * 0.25 * 2.0));
    CHECK(junc::conductance_derivative(s, 2.0, 3) == doctest::Approx(6.0 * 0.25));
    CHECK(junc::conductance_derivative(s, 2.0, 4) == 0.0);
}

TEST_CASE("linear conductance yields only the fundamental") {
    const Site s = make_site(4.0, {0.0, 3e-9, 0, 0, 0, 0, 0, 0});
    const auto h = junc::harmonic_amplitudes(s, 5.0, -2.5, 0.5, 4);
    const double atten = std::exp(-1.025 * 5.0 * 2.0);
    CHECK(h[1] == doctest::Approx(0.5 * 3e-9 * atten).epsilon(1e-12));
    CHECK(h[2] == 0.0);
    CHECK(h[3] == 0.0);
    CHECK(h[4] == 0.0);
}

TEST_CASE("cubic conductance at zero gap matches the closed-form expansion") {
    const Site s = make_site(4.0, {0.0, 0.0, 0.0, 1.0, 0, 0, 0, 0});
    const auto h = junc::harmonic_amplitudes(s, 0.0, 1.0, 0.1, 3);
    CHECK(h[1] == doctest::Approx(0.30075).epsilon(1e-12));
    CHECK(h[2] == doctest::Approx(-0.25 * 0.01 * 6.0 * 1.0 - 0.01 * 0.01 / 48.0 * 0.0).epsilon(1e-9));
    CHECK(h[3] == doctest::Approx(-0.001 / 24.0 * 6.0).epsilon(1e-9));
}

TEST_CASE("harmonic closed form agrees with Fourier quadrature for degree-7 conductance") {
    const Site s = make_site(3.1, {1e-10, 4e-10, -2e-10, 3e-10, -1e-10, 5e-11, -2e-11, 1e-11});
    const double gap = 4.2, v_dc = -1.7, vm = 0.9;
    const auto got = junc::harmonic_amplitudes(s, gap, v_dc, vm, 6);
    const auto want = fourier_oracle(s, gap, v_dc, vm, 6);
    for (int n = 0; n <= 6; ++n) {
        INFO("harmonic ", n);
        CHECK(std::abs(got[n] - want[n]) <= 1e-6 * std::abs(want[n]) + 1e-25);
    }
}

TEST_CASE("harmonics beyond the polynomial order vanish") {
    const Site s = make_site(4.0, {0.0, 1e-9, 0.0, 2e-10, 0, 0, 0, 0});
    const auto h = junc::harmonic_amplitudes(s, 5.0, 0.5, 0.3, 5);
    CHECK(h[4] == 0.0);
    CHECK(h[5] == 0.0);
}

TEST_CASE("small-amplitude law: I_n / vm^n approaches the derivative scaling") {
    const Site s = make_site(4.0, {2e-10, 7e-10, -3e-10, 4e-10, 2e-10, 0, 0, 0});
    const double gap = 5.0, v_dc = -1.2, vm = 1e-3;
    const double atten = std::exp(-1.025 * gap * 2.0);
    const auto h = junc::harmonic_amplitudes(s, gap, v_dc, vm, 3);
    for (int n = 1; n <= 3; ++n) {
        const double want = std::abs(junc::conductance_derivative(s, v_dc, n)) * atten /
                            (std::pow(2.0, n - 1) * std::tgamma(n + 1.0));
        CHECK(std::abs(h[n]) / std::pow(vm, n) == doctest::Approx(want).epsilon(1e-4));
    }
}

TEST_CASE("even harmonics carry the sign opposite their driving derivative") {
    const Site convex = make_site(4.0, {1e-9, 0.0, 5e-10, 0, 0, 0, 0, 0});
    const auto h = junc::harmonic_amplitudes(convex, 5.0, 0.0, 0.2, 3);
    CHECK(junc::conductance_derivative(convex, 0.0, 2) > 0.0);
    CHECK(h[2] < 0.0);

    const Site cubic = make_site(4.0, {0.0, 1e-9, 0.0, 2e-10, 0, 0, 0, 0});
    const auto h3 = junc::harmonic_amplitudes(cubic, 5.0, 0.0, 0.2, 3);
    CHECK(junc::conductance_derivative(cubic, 0.0, 3) > 0.0);
    CHECK(h3[3] < 0.0);
}
