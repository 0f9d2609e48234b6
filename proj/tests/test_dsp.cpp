#include "stmlab/dsp.hpp"

#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

using namespace stmlab;

namespace {
constexpr double pi = std::numbers::pi;
constexpr double fs = 100e3;
}

TEST_CASE("phase accumulator tracks frequency and wraps") {
    PhaseAccumulator acc(2000.0, fs);
    CHECK(acc.frequency() == doctest::Approx(2000.0));
    double th = 0.0;
    for (int i = 0; i < 150; ++i) th = acc.advance();
    CHECK(th == doctest::Approx(std::fmod(2 * pi * 2000.0 * 149.0 / fs, 2 * pi)).epsilon(1e-9));
    CHECK(th >= 0.0);
    CHECK(th < 2 * pi);
    CHECK_THROWS_AS(PhaseAccumulator(60e3, fs), std::invalid_argument);
}

TEST_CASE("harmonic reference recurrence matches sin/cos of multiples") {
    const double th = 1.234;
    double s[7], c[7];
    harmonic_refs(std::sin(th), std::cos(th), 6, s, c);
    for (int k = 0; k <= 6; ++k) {
        CHECK(s[k] == doctest::Approx(std::sin(k * th)).epsilon(1e-12));
        CHECK(c[k] == doctest::Approx(std::cos(k * th)).epsilon(1e-12));
    }
}

TEST_CASE("lock-in recovers amplitude and phase of a single tone") {
    LockIn li({fs, 200.0, 4, 0.0});
    PhaseAccumulator acc(2000.0, fs);
    const double a = 0.7, ph = 0.4;
    const long n = static_cast<long>(3 * li.settle_time_s() * fs);
    for (long i = 0; i < n; ++i) {
        const double th = acc.advance();
        li.step(a * std::sin(th + ph), std::sin(th), std::cos(th));
    }
    CHECK(li.settled());
    CHECK(li.amplitude() == doctest::Approx(a).epsilon(0.005));
    CHECK(li.phase() == doctest::Approx(ph).epsilon(0.005));
    CHECK(li.in_phase() == doctest::Approx(a * std::cos(ph)).epsilon(0.005));
    CHECK(li.quadrature() == doctest::Approx(a * std::sin(ph)).epsilon(0.005));
}

TEST_CASE("two harmonics and a dc offset demodulate concurrently") {
    LockIn li1({fs, 200.0, 4, 0.0});
    LockIn li2({fs, 200.0, 4, 0.0});
    PhaseAccumulator acc(2000.0, fs);
    double s[3], c[3];
    const long n = static_cast<long>(3 * li1.settle_time_s() * fs);
    for (long i = 0; i < n; ++i) {
        const double th = acc.advance();
        harmonic_refs(std::sin(th), std::cos(th), 2, s, c);
        const double y = 7.0 + 3.0 * std::sin(th) + 5.0 * std::cos(2 * th);
        li1.step(y, s[1], c[1]);
        li2.step(y, s[2], c[2]);
    }
    CHECK(li1.amplitude() == doctest::Approx(3.0).epsilon(0.01));
    CHECK(li1.phase() == doctest::Approx(0.0).epsilon(0.01));
    CHECK(li2.amplitude() == doctest::Approx(5.0).epsilon(0.01));
    CHECK(li2.in_phase() == doctest::Approx(0.0).epsilon(0.02));
    CHECK(li2.quadrature() == doctest::Approx(5.0).epsilon(0.01));
}

TEST_CASE("lock-in compensation divides out a known path response") {
    LockIn li({fs, 200.0, 4, 0.0});
    const std::complex<double> h = std::polar(0.5, -0.3);
    li.set_compensation(h);
    PhaseAccumulator acc(2000.0, fs);
    const long n = static_cast<long>(3 * li.settle_time_s() * fs);
    for (long i = 0; i < n; ++i) {
        const double th = acc.advance();
        // tone of unit amplitude pushed through the path h
        li.step(std::abs(h) * std::sin(th + std::arg(h)), std::sin(th), std::cos(th));
    }
    CHECK(li.in_phase() == doctest::Approx(1.0).epsilon(0.005));
    CHECK(li.quadrature() == doctest::Approx(0.0).epsilon(0.005));
}

TEST_CASE("swept sine covers its band at the configured rate") {
    SweptSine sw({100.0, 1600.0, 2.0, 0.5, fs});
    CHECK(sw.frequency() == doctest::Approx(100.0));
    long n = 0;
    while (!sw.done()) {
        sw.step();
        ++n;
    }
    CHECK(sw.frequency() == doctest::Approx(1600.0));
    // four octaves at two octaves per second
    CHECK(n / fs == doctest::Approx(2.0).epsilon(1e-3));

    SweptSine tone({500.0, 500.0, 1.0, 1.0, fs});
    for (int i = 0; i < 1000; ++i) tone.step();
    CHECK(tone.frequency() == doctest::Approx(500.0));
    CHECK_FALSE(tone.done());
}

TEST_CASE("swept sine demodulated against itself returns its amplitude") {
    SweptSine sw({200.0, 800.0, 1.0, 0.37, fs});
    LockIn li({fs, 50.0, 2, 0.0});
    PhaseAccumulator acc(200.0, fs);
    std::vector<double> mids;
    while (!sw.done()) {
        acc.set_frequency(sw.frequency());
        const double th = acc.advance();
        li.step(sw.step(), std::sin(th), std::cos(th));
        if (sw.frequency() > 390.0 && sw.frequency() < 410.0) mids.push_back(li.amplitude());
    }
    CHECK(mids.back() == doctest::Approx(0.37).epsilon(0.01));
}

TEST_CASE("notch bank removes targeted tones and passes low frequencies") {
    NotchBank bank({fs, {2000.0, 4000.0}, 5.0});
    CHECK(std::abs(bank.response(2000.0)) < 1e-8);
    CHECK(std::abs(bank.response(4000.0)) < 1e-8);
    CHECK(std::abs(bank.response(200.0)) > 0.99);

    double resid = 0.0, low_peak = 0.0;
    for (int i = 0; i < 60000; ++i) {
        const double t = i / fs;
        const double x = std::sin(2 * pi * 2000.0 * t) + 0.8 * std::sin(2 * pi * 4000.0 * t) +
                         0.5 * std::sin(2 * pi * 200.0 * t);
        const double y = bank.step(x);
        if (i > 50000) {
            resid = std::max(resid, std::abs(y - 0.5 * std::sin(2 * pi * 200.0 * t)));
            low_peak = std::max(low_peak, std::abs(y));
        }
    }
    CHECK(resid < 0.03);
    CHECK(low_peak == doctest::Approx(0.5).epsilon(0.02));

    NotchBank none;
    CHECK(none.step(1.234) == doctest::Approx(1.234));
}

TEST_CASE("moving rms over constants and sines") {
    MovingRms rms(1000);
    for (int i = 0; i < 1000; ++i) rms.push(-2.0);
    CHECK(rms.full());
    CHECK(rms.value() == doctest::Approx(2.0).epsilon(1e-12));

    MovingRms srms(2000);
    for (int i = 0; i < 6000; ++i) srms.push(0.9 * std::sin(2 * pi * 500.0 * i / fs));
    CHECK(srms.value() == doctest::Approx(0.9 / std::sqrt(2.0)).epsilon(0.01));

    srms.reset();
    CHECK(srms.value() == 0.0);
}
