#include "stmlab/linear_system.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

using namespace stmlab;
using cplx = std::complex<double>;

namespace {
constexpr double pi = std::numbers::pi;
double db(double m) { return 20.0 * std::log10(m); }
double deg(double r) { return r * 180.0 / pi; }
} // namespace

TEST_CASE("pure gain block passes input through scaled") {
    LinearSystem g = LinearSystem::gain_block(3.5);
    CHECK(g.step(2.0) == doctest::Approx(7.0));
    CHECK(g.step(-1.0) == doctest::Approx(-3.5));
    CHECK(g.dc_gain() == doctest::Approx(3.5));
    LinearSystem unity = LinearSystem::identity();
    CHECK(unity.step(0.1234) == doctest::Approx(0.1234).epsilon(1e-15));
}

TEST_CASE("integrator ramps at one unit per second for unit dc input") {
    LinearSystem s = LinearSystem::integrator();
    s.discretize(100e3);
    double y = 0.0;
    for (int n = 0; n < 100000; ++n) y = s.step(1.0);
    CHECK(y == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("first-order lowpass step response hits 63.2% within one sample of 1/w0") {
    const double corner_hz = 500.0;
    const double w0 = 2 * pi * corner_hz;
    LinearSystem s = LinearSystem::first_order_lowpass(corner_hz);
    s.discretize(100e3);
    int n = -1;
    double y = 0.0;
    while (y < 1.0 - std::exp(-1.0)) {
        y = s.step(1.0);
        ++n;
    }
    const double t_cross = n / 100e3;
    CHECK(std::abs(t_cross - 1.0 / w0) <= 1.0 / 100e3);
}

TEST_CASE("prewarped first-order corner lands exactly at -3 dB") {
    LinearSystem s = LinearSystem::first_order_lowpass(500.0);
    s.discretize(100e3);
    const cplx h = s.discrete_response(500.0);
    CHECK(std::abs(h) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(deg(std::arg(h)) == doctest::Approx(-45.0).epsilon(1e-9));
}

TEST_CASE("resonant mode peaks 1/(2 zeta) at its center after discretization") {
    const double w0 = 9000.0, zeta = 0.015;
    LinearSystem s = LinearSystem::resonant_mode(w0, zeta);
    s.discretize(100e3);
    const cplx h = s.discrete_response(w0 / (2 * pi));
    CHECK(std::abs(h) == doctest::Approx(1.0 / (2.0 * zeta)).epsilon(1e-9));
    CHECK(deg(std::arg(h)) == doctest::Approx(-90.0).epsilon(1e-6));
    CHECK(s.dc_gain() == doctest::Approx(1.0));
}

TEST_CASE("notch nulls its center and recovers by 3x the frequency") {
    LinearSystem n = LinearSystem::notch(2000.0, 5.0);
    n.discretize(100e3);
    CHECK(std::abs(n.discrete_response(2000.0)) < 1e-8);
    CHECK(std::abs(n.discrete_response(6000.0)) > 0.99);
    CHECK(std::abs(n.discrete_response(6000.0)) <= 1.0 + 1e-9);
    CHECK(n.dc_gain() == doctest::Approx(1.0));
}

TEST_CASE("butterworth lowpass: exact corner, asymptotic slope, unit dc") {
    LinearSystem b = LinearSystem::butterworth_lowpass(4, 500.0);
    b.discretize(100e3);
    CHECK(std::abs(b.discrete_response(500.0)) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-9));
    const double att = db(std::abs(b.discrete_response(5000.0)));
    CHECK(att > -81.0);
    CHECK(att < -79.0);
    double y = 0.0;
    for (int i = 0; i < 100000; ++i) y = b.step(1.0);
    CHECK(y == doctest::Approx(1.0).epsilon(1e-9));

    LinearSystem b3 = LinearSystem::butterworth_lowpass(3, 800.0);
    b3.discretize(100e3);
    CHECK(std::abs(b3.discrete_response(800.0)) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-9));
}

TEST_CASE("preload_dc parks a cascade at steady state") {
    LinearSystem b = LinearSystem::butterworth_lowpass(4, 500.0);
    b.scale_gain(2.5);
    b.discretize(100e3);
    const double y0 = b.preload_dc(3.0);
    CHECK(y0 == doctest::Approx(7.5).epsilon(1e-12));
    for (int i = 0; i < 50; ++i) CHECK(b.step(3.0) == doctest::Approx(7.5).epsilon(1e-12));
}

TEST_CASE("from_zpk reproduces the factored transfer function") {
    const std::vector<cplx> zeros{{-100.0, 0.0}};
    const std::vector<cplx> poles{{-50.0, 200.0}, {-50.0, -200.0}, {-30.0, 0.0}};
    LinearSystem sys = LinearSystem::from_zpk(zeros, poles, 4.2);
    for (double f : {1.0, 10.0, 50.0, 200.0}) {
        const cplx s(0.0, 2 * pi * f);
        cplx manual = 4.2 * (s + 100.0);
        for (const auto& p : poles) manual /= (s - p);
        const cplx got = sys.response(f);
        CHECK(std::abs(got - manual) <= 1e-12 * std::abs(manual));
    }
    CHECK(sys.stable());
    CHECK(sys.order() == 3);

    auto ps = sys.poles();
    std::sort(ps.begin(), ps.end(), [](cplx a, cplx b) { return a.imag() < b.imag(); });
    CHECK(ps[0].imag() == doctest::Approx(-200.0).epsilon(1e-9));
    CHECK(ps[1].real() == doctest::Approx(-30.0).epsilon(1e-9));
    CHECK(ps[2].imag() == doctest::Approx(200.0).epsilon(1e-9));

    LinearSystem rhp = LinearSystem::from_zpk({}, {{10.0, 0.0}}, 1.0);
    CHECK_FALSE(rhp.stable());
}

TEST_CASE("from_zpk rejects improper and unpaired inputs") {
    CHECK_THROWS_AS(LinearSystem::from_zpk({{-1.0, 0.0}, {-2.0, 0.0}}, {{-3.0, 0.0}}, 1.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(LinearSystem::from_zpk({}, {{-3.0, 4.0}}, 1.0), std::invalid_argument);
}

TEST_CASE("corner far beyond Nyquist falls back to a stable trapezoidal map") {
    LinearSystem s = LinearSystem::first_order_lowpass(400e3);
    s.discretize(100e3);
    for (const auto& st : s.stages()) {
        CHECK(std::abs(st.a1) < 1.0);
        CHECK(std::abs(st.a2) < 1.0);
    }
    const double mag_err = db(std::abs(s.discrete_response(10e3))) - db(std::abs(s.response(10e3)));
    const double ph_err = deg(std::arg(s.discrete_response(10e3)) - std::arg(s.response(10e3)));
    CHECK(std::abs(mag_err) < 0.05);
    CHECK(std::abs(ph_err) < 0.8);
}

TEST_CASE("series composition multiplies responses and dc gains") {
    LinearSystem a = LinearSystem::resonant_mode(9000.0, 0.015, 2.0);
    LinearSystem b = LinearSystem::first_order_lowpass(50e3);
    LinearSystem c = a * b;
    const cplx want = a.response(700.0) * b.response(700.0);
    CHECK(std::abs(c.response(700.0) - want) <= 1e-12 * std::abs(want));
    CHECK(c.dc_gain() == doctest::Approx(2.0));
    CHECK(c.order() == 3);
}

TEST_CASE("quadratic root helper") {
    auto r = quadratic_roots({6.0, 5.0, 1.0});
    std::sort(r.begin(), r.end(), [](cplx a, cplx b) { return a.real() < b.real(); });
    CHECK(r[0].real() == doctest::Approx(-3.0));
    CHECK(r[1].real() == doctest::Approx(-2.0));
    CHECK(quadratic_roots({0.0, 1.0, 0.0}).size() == 1);
    CHECK(quadratic_roots({1.0, 0.0, 0.0}).empty());
}

TEST_CASE("stepping an undiscretized dynamic system is an error") {
    LinearSystem s = LinearSystem::first_order_lowpass(100.0);
    CHECK_THROWS_AS(s.step(1.0), std::logic_error);
}
