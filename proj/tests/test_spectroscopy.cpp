#include "stmlab/spectroscopy.hpp"

#include "stmlab/loop.hpp"
#include "stmlab/surface.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

using namespace stmlab;
using namespace stmlab::spectroscopy;

namespace {

constexpr double a0 = 0.384; // lattice spacing, nm
constexpr double two_pi = 6.28318530717958647692;

// base conductance polynomial of the generated surfaces
double poly(double v) { return 4e-6 * v + 2.56e-7 * v * v * v; }

SurfaceModel flat_surface(int n = 16) {
    SurfaceGenSpec s;
    s.rows = s.cols = n;
    s.corrugation_ang = 0.0;
    return generate_surface(s);
}

double row_mean(const Image2D& img, int row) {
    double acc = 0.0;
    for (int c = 0; c < img.cols; ++c) acc += img.at(row, c);
    return acc / img.cols;
}

double row_std(const Image2D& img, int row) {
    const double m = row_mean(img, row);
    double acc = 0.0;
    for (int c = 0; c < img.cols; ++c) {
        const double d = img.at(row, c) - m;
        acc += d * d;
    }
    return std::sqrt(acc / img.cols);
}

} // namespace

TEST_CASE("frozen-gap ramp reads the conductance polynomial") {
    SurfaceModel m = flat_surface();
    LoopConfig cfg;
    cfg.ki = 0.08;
    FeedbackLoop loop(m, cfg);

    IvSweepConfig sweep;
    sweep.v_start = -2.0;
    sweep.v_end = 2.0;
    sweep.n_points = 41;
    IvCurve curve = single_point_iv(loop, 8 * a0, 8 * a0, sweep);

    REQUIRE(curve.bias_v.size() == 41);
    REQUIRE(curve.current_a.size() == 41);
    CHECK(curve.bias_v.front() == doctest::Approx(-2.0));
    CHECK(curve.bias_v.back() == doctest::Approx(2.0));

    // the gap froze at the -2.5 V / 0.5 nA operating point
    const double g = 0.5e-9 / std::abs(poly(-2.5));
    for (int k = 0; k < 41; ++k) {
        const double i_exp = poly(curve.bias_v[k]) * g;
        CHECK(std::abs(curve.current_a[k] - i_exp) <= 0.005 * std::abs(i_exp) + 1e-13);
    }

    // feedback is back afterwards
    CHECK_FALSE(loop.z_frozen());
    CHECK_FALSE(loop.crashed());
    loop.run(0.05);
    CHECK(std::abs(loop.last_sample().e) < 0.05);
}

TEST_CASE("grid spectroscopy normalizes out the conductance step") {
    SurfaceModel m = flat_surface();
    m.desorb(8, 8); // x5 conductance, barrier scaled by the surface default
    LoopConfig cfg;
    cfg.ki = 0.08;
    FeedbackLoop loop(m, cfg);

    CitsConfig cits;
    cits.x0_nm = 6 * a0;
    cits.y0_nm = 6 * a0;
    cits.width_nm = 4 * a0;
    cits.height_nm = 4 * a0;
    cits.points_x = cits.points_y = 4;
    cits.sweep.v_start = -1.0;
    cits.sweep.v_end = 1.0;
    cits.sweep.n_points = 11;
    CitsCube cube = run_cits(loop, cits);

    REQUIRE(cube.rows == 4);
    REQUIRE(cube.cols == 4);
    REQUIRE(cube.bias_v.size() == 11);
    REQUIRE(cube.current_a.size() == 4 * 4 * 11);
    CHECK(cube.duration_s > 16 * 0.3);

    // engaging at constant current scales the gap against the local
    // conductance, so the frozen sweep is the same curve everywhere
    Image2D cut = current_slice(cube, 0.5);
    const double i_exp = 0.5e-9 * poly(0.5) / std::abs(poly(-2.5));
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c)
            CHECK(cut.at(r, c) == doctest::Approx(i_exp).epsilon(0.01));

    CHECK_THROWS_AS(current_slice(cube, 1.2), std::out_of_range);
    CHECK_THROWS_AS(current_slice(cube, -1.0001), std::out_of_range);

    write_cits_csv(cube, "cits_test.csv");
    std::ifstream in("cits_test.csv");
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    CHECK(text.rfind("pixel_row,pixel_col,bias_v,current_a\n0,0,-1,", 0) == 0);
    long lines = 0;
    for (char ch : text)
        if (ch == '\n') ++lines;
    CHECK(lines == 1 + 4 * 4 * 11);
    in.close();
    std::remove("cits_test.csv");
}

TEST_CASE("slice interpolates between recorded biases") {
    CitsCube cube;
    cube.rows = cube.cols = 1;
    cube.bias_v = {0.0, 1.0};
    cube.current_a = {1e-9, 3e-9};
    Image2D cut = current_slice(cube, 0.25);
    CHECK(cut.at(0, 0) == doctest::Approx(1.5e-9).epsilon(1e-12));
    CHECK(current_slice(cube, 1.0).at(0, 0) == doctest::Approx(3e-9).epsilon(1e-12));
    CHECK_THROWS_AS(current_slice(cube, -0.1), std::out_of_range);
    CHECK_THROWS_AS(current_slice(cube, 1.1), std::out_of_range);
}

TEST_CASE("one modulation cycle traces the full curve") {
    SurfaceModel m = flat_surface();
    LoopConfig cfg;
    cfg.source = FeedbackSource::inphase_fundamental;
    cfg.v_bias = 0.0;
    cfg.setpoint_apv = 0.4e-9; // 1 nA demodulated fundamental at 2.5 V drive
    cfg.mod = {2.5, 2000.0};
    cfg.lockins.harmonics = 1;
    cfg.ki = 0.05;
    FeedbackLoop loop(m, cfg);

    UltrafastConfig uf;
    uf.settle_s = 0.02;
    UltrafastCurve curve = ultrafast_iv(loop, 8 * a0, 8 * a0, uf);

    REQUIRE(curve.bias_v.size() == 64);
    REQUIRE(curve.current_a.size() == 64);
    CHECK(curve.settled);
    CHECK(curve.duration_s < 0.06);

    // the fundamental pins (2.5 f' + 2.5^3/8 f''') exp(-1.025 sqrt(4) d) at 1 nA
    const double amp0 = 2.5 * 4e-6 + (2.5 * 2.5 * 2.5 / 8.0) * 1.536e-6;
    const double g = 1e-9 / amp0;
    CHECK(curve.gap_ang == doctest::Approx(std::log(amp0 / 1e-9) / 2.05).epsilon(0.005));
    CHECK(curve.i_cap_peak_a == doctest::Approx(0.5e-12 * 2.5 * two_pi * 2000.0).epsilon(0.01));

    for (int k = 0; k < 64; ++k) {
        const double i_exp = poly(curve.bias_v[k]) * g;
        CHECK(std::abs(curve.current_a[k] - i_exp) <= 0.03 * std::abs(i_exp) + 1.5e-11);
    }

    // a wait shorter than the demodulator response is flagged
    UltrafastConfig rushed;
    rushed.settle_s = 0.001;
    CHECK_FALSE(ultrafast_iv(loop, 8 * a0, 8 * a0, rushed).settled);
}

TEST_CASE("big drive plus notch bank lifts the third harmonic") {
    ScanConfig frame;
    frame.x0_nm = 2 * a0;
    frame.y0_nm = 8 * a0;
    frame.width_nm = 8 * a0;
    frame.height_nm = 0.0;
    frame.pixels_x = 16;
    frame.pixels_y = 1;
    frame.speed_nm_s = 2.0;

    auto third_snr = [&](double vm, bool notch, HarmonicMaps* out) {
        SurfaceModel m = flat_surface();
        m.noise_sigma_a = 5e-12;
        LoopConfig cfg;
        cfg.ki = 0.08;
        cfg.mod = {vm, 2000.0};
        cfg.lockins.harmonics = 3;
        if (notch) cfg.notch.freqs_hz = {2000.0, 4000.0, 6000.0};
        cfg.seed = 7;
        FeedbackLoop loop(m, cfg);
        HarmonicMaps maps = harmonic_scan(loop, frame);
        if (out) *out = maps;
        return std::abs(row_mean(maps.inphase_a[2], 0)) / row_std(maps.inphase_a[2], 0);
    };

    HarmonicMaps big;
    const double snr_big = third_snr(0.8, true, &big);
    const double snr_small = third_snr(0.1, false, nullptr);
    CHECK(snr_big > 4.0);
    CHECK(snr_big >= 4.0 * snr_small);

    // the dc term the loop regulates shifts to f + vm^2/4 f'', and the second
    // harmonic shows up at -vm^2/4 f'' on the cosine channel
    const double i_dc = std::abs(poly(-2.5) + (0.8 * 0.8 / 4.0) * (1.536e-6 * -2.5));
    const double g = 0.5e-9 / i_dc;
    const double i2_exp = -(0.8 * 0.8 / 4.0) * (1.536e-6 * -2.5) * g;
    CHECK(row_mean(big.quad_a[1], 0) == doctest::Approx(i2_exp).epsilon(0.12));
    CHECK(row_std(big.topo, 0) < 0.05);
}

TEST_CASE("spectroscopy misuse is rejected") {
    SurfaceModel m = flat_surface();
    LoopConfig cfg;
    FeedbackLoop loop(m, cfg);

    IvSweepConfig sweep;
    sweep.n_points = 1;
    CHECK_THROWS_AS(single_point_iv(loop, a0, a0, sweep), std::invalid_argument);
    sweep.n_points = 11;
    sweep.v_start = sweep.v_end = 1.0;
    CHECK_THROWS_AS(single_point_iv(loop, a0, a0, sweep), std::invalid_argument);

    CitsConfig cits;
    cits.x0_nm = 4 * a0;
    cits.y0_nm = 4 * a0;
    cits.width_nm = 100.0; // off the surface
    CHECK_THROWS_AS(run_cits(loop, cits), std::invalid_argument);

    ScanConfig frame;
    frame.width_nm = frame.height_nm = 4 * a0;
    frame.pixels_x = frame.pixels_y = 4;
    CHECK_THROWS_AS(harmonic_scan(loop, frame), std::invalid_argument); // no lock-ins

    UltrafastConfig uf;
    CHECK_THROWS_AS(ultrafast_iv(loop, a0, a0, uf), std::invalid_argument); // wrong source

    LoopConfig biased;
    biased.source = FeedbackSource::inphase_fundamental;
    biased.v_bias = -2.5;
    biased.mod = {2.5, 2000.0};
    biased.lockins.harmonics = 1;
    FeedbackLoop loop2(m, biased);
    CHECK_THROWS_AS(ultrafast_iv(loop2, a0, a0, uf), std::invalid_argument);
}
