#include "stmlab/spectroscopy.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <stdexcept>

namespace stmlab::spectroscopy {

namespace {

constexpr double two_pi = 6.28318530717958647692;

void check_sweep(const IvSweepConfig& s) {
    if (s.n_points < 2) throw std::invalid_argument("bias sweep needs at least 2 points");
    if (s.dwell_s <= 0.0 || s.settle_s < 0.0)
        throw std::invalid_argument("bias sweep timing must be positive");
    if (s.v_start == s.v_end) throw std::invalid_argument("bias sweep range is empty");
}

std::vector<double> bias_axis(const IvSweepConfig& s) {
    std::vector<double> v(s.n_points);
    for (int k = 0; k < s.n_points; ++k)
        v[k] = s.v_start + (s.v_end - s.v_start) * k / (s.n_points - 1);
    return v;
}

// ramp at frozen gap; the loop bias is left at the last point
void sweep_frozen(FeedbackLoop& loop, const std::vector<double>& axis, double dwell_s,
                  std::vector<double>& out) {
    const double r = loop.config().plant.preamp_r;
    const long n_dwell = std::max<long>(2, std::lround(dwell_s * loop.fs()));
    const long n_skip = n_dwell / 2;
    for (double v : axis) {
        loop.set_bias(v);
        double acc = 0.0;
        for (long i = 0; i < n_dwell; ++i) {
            const LoopSample s = loop.tick();
            if (i >= n_skip) acc += s.v_pre;
        }
        out.push_back(acc / static_cast<double>(n_dwell - n_skip) / r);
    }
}

} // namespace

IvCurve single_point_iv(FeedbackLoop& loop, double x_nm, double y_nm, const IvSweepConfig& cfg) {
    check_sweep(cfg);
    const double v0 = loop.bias();
    loop.engage_at(x_nm, y_nm);
    loop.run(cfg.settle_s);
    loop.freeze_z(true);

    IvCurve curve;
    curve.bias_v = bias_axis(cfg);
    curve.current_a.reserve(curve.bias_v.size());
    sweep_frozen(loop, curve.bias_v, cfg.dwell_s, curve.current_a);

    loop.set_bias(v0);
    loop.freeze_z(false);
    loop.run(0.01);
    return curve;
}

CitsCube run_cits(FeedbackLoop& loop, const CitsConfig& cfg) {
    check_sweep(cfg.sweep);
    if (cfg.points_x < 1 || cfg.points_y < 1)
        throw std::invalid_argument("grid needs at least one point");
    if ((cfg.points_x > 1 && cfg.width_nm <= 0.0) || (cfg.points_y > 1 && cfg.height_nm <= 0.0))
        throw std::invalid_argument("multi-point grid needs positive extent");
    const SurfaceModel& srf = loop.surface();
    if (cfg.x0_nm < 0.0 || cfg.y0_nm < 0.0 || cfg.x0_nm + cfg.width_nm > srf.width_nm() ||
        cfg.y0_nm + cfg.height_nm > srf.height_nm())
        throw std::invalid_argument("grid reaches outside the surface");
    if (loop.config().source != FeedbackSource::log_current)
        throw std::invalid_argument("point spectroscopy regulates the dc current");

    CitsCube cube;
    cube.rows = cfg.points_y;
    cube.cols = cfg.points_x;
    cube.bias_v = bias_axis(cfg.sweep);
    cube.current_a.reserve(cube.bias_v.size() * cfg.points_x * cfg.points_y);

    auto col_x = [&](int c) {
        return cube.cols == 1 ? cfg.x0_nm : cfg.x0_nm + cfg.width_nm * c / (cube.cols - 1);
    };
    auto row_y = [&](int r) {
        return cube.rows == 1 ? cfg.y0_nm : cfg.y0_nm + cfg.height_nm * r / (cube.rows - 1);
    };

    const double v0 = loop.bias();
    const double t0 = loop.time();
    loop.engage_at(col_x(0), row_y(0));
    for (int r = 0; r < cube.rows; ++r) {
        for (int c = 0; c < cube.cols; ++c) {
            loop.move_to(col_x(c), row_y(r));
            if (loop.crashed()) loop.re_engage();
            loop.run(cfg.sweep.settle_s);
            loop.freeze_z(true);
            sweep_frozen(loop, cube.bias_v, cfg.sweep.dwell_s, cube.current_a);
            loop.set_bias(v0);
            loop.freeze_z(false);
        }
    }
    cube.duration_s = loop.time() - t0;
    return cube;
}

Image2D current_slice(const CitsCube& cube, double bias_v) {
    const auto& b = cube.bias_v;
    if (b.size() < 2) throw std::invalid_argument("cube has no bias axis to cut");
    int k = -1;
    for (std::size_t i = 0; i + 1 < b.size(); ++i) {
        if (bias_v >= std::min(b[i], b[i + 1]) && bias_v <= std::max(b[i], b[i + 1])) {
            k = static_cast<int>(i);
            break;
        }
    }
    if (k < 0) throw std::out_of_range("bias outside the swept range");
    const double t = (bias_v - b[k]) / (b[k + 1] - b[k]);
    Image2D img(cube.rows, cube.cols);
    for (int r = 0; r < cube.rows; ++r)
        for (int c = 0; c < cube.cols; ++c)
            img.at(r, c) = (1.0 - t) * cube.at(r, c, k) + t * cube.at(r, c, k + 1);
    return img;
}

void write_iv_csv(const IvCurve& curve, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("cannot open " + path);
    std::fprintf(f, "bias_v,current_a\n");
    for (std::size_t k = 0; k < curve.bias_v.size(); ++k)
        std::fprintf(f, "%.12g,%.12g\n", curve.bias_v[k], curve.current_a[k]);
    std::fclose(f);
}

void write_cits_csv(const CitsCube& cube, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("cannot open " + path);
    std::fprintf(f, "pixel_row,pixel_col,bias_v,current_a\n");
    for (int r = 0; r < cube.rows; ++r)
        for (int c = 0; c < cube.cols; ++c)
            for (std::size_t k = 0; k < cube.bias_v.size(); ++k)
                std::fprintf(f, "%d,%d,%.12g,%.12g\n", r, c, cube.bias_v[k],
                             cube.at(r, c, static_cast<int>(k)));
    std::fclose(f);
}

HarmonicMaps harmonic_scan(FeedbackLoop& loop, const ScanConfig& frame) {
    if (frame.mode != ScanMode::constant_current)
        throw std::invalid_argument("harmonic maps record under constant-current feedback");
    if (loop.config().source != FeedbackSource::log_current)
        throw std::invalid_argument("harmonic maps need the log-current feedback source");
    const int nh = loop.config().lockins.harmonics;
    if (nh < 1) throw std::invalid_argument("harmonic maps need tracked harmonics");
    if (loop.modulation_vm() <= 0.0)
        throw std::invalid_argument("harmonic maps need bias modulation");
    if (frame.pixels_x < 2 || frame.pixels_y < 1)
        throw std::invalid_argument("image needs at least 2x1 pixels");
    const SurfaceModel& srf = loop.surface();
    if (frame.x0_nm < 0.0 || frame.y0_nm < 0.0 || frame.x0_nm + frame.width_nm > srf.width_nm() ||
        frame.y0_nm + frame.height_nm > srf.height_nm())
        throw std::invalid_argument("scan frame reaches outside the surface");

    const int nx = frame.pixels_x;
    const int ny = frame.pixels_y;
    HarmonicMaps maps;
    maps.topo = Image2D(ny, nx);
    maps.inphase_a.assign(nh, Image2D(ny, nx));
    maps.quad_a.assign(nh, Image2D(ny, nx));

    const double fs = loop.fs();
    const double gain = loop.config().plant.extension_gain();
    const double r_gain = loop.config().plant.preamp_r;
    const long line_ticks = std::max<long>(1, std::lround(frame.width_nm / frame.speed_nm_s * fs));

    auto row_y = [&](int j) {
        return ny == 1 ? frame.y0_nm : frame.y0_nm + frame.height_nm * j / (ny - 1);
    };

    const double t0 = loop.time();
    loop.engage_at(frame.x0_nm, row_y(0));
    loop.run(frame.settle_s);
    const double datum_u = loop.last_sample().u;

    std::vector<double> acc_t(nx);
    std::vector<std::vector<double>> acc_i(nh, std::vector<double>(nx));
    std::vector<std::vector<double>> acc_q(nh, std::vector<double>(nx));
    std::vector<long> cnt(nx);

    for (int j = 0; j < ny; ++j) {
        loop.move_to(frame.x0_nm, row_y(j));
        if (loop.crashed()) {
            loop.re_engage();
            loop.run(frame.settle_s);
            if (loop.crashed()) continue;
        } else if (j > 0) {
            loop.run(0.01);
        }

        std::fill(acc_t.begin(), acc_t.end(), 0.0);
        for (auto& a : acc_i) std::fill(a.begin(), a.end(), 0.0);
        for (auto& a : acc_q) std::fill(a.begin(), a.end(), 0.0);
        std::fill(cnt.begin(), cnt.end(), 0);

        bool aborted = false;
        for (long i = 0; i < line_ticks && !aborted; ++i) {
            const double sx = (i + 0.5) / line_ticks;
            loop.move_to(frame.x0_nm + sx * frame.width_nm, row_y(j));
            const LoopSample s = loop.tick();
            if (s.crashed) {
                ++maps.crash_count;
                aborted = true;
                break;
            }
            const int bin = std::min(nx - 1, static_cast<int>(sx * nx));
            acc_t[bin] += -gain * (s.u - datum_u);
            for (int h = 0; h < nh; ++h) {
                acc_i[h][bin] += s.harmonics[h][0] / r_gain;
                acc_q[h][bin] += s.harmonics[h][1] / r_gain;
            }
            ++cnt[bin];
        }

        for (int c = 0; c < nx; ++c) {
            if (cnt[c] == 0) continue;
            maps.topo.at(j, c) = acc_t[c] / cnt[c];
            for (int h = 0; h < nh; ++h) {
                maps.inphase_a[h].at(j, c) = acc_i[h][c] / cnt[c];
                maps.quad_a[h].at(j, c) = acc_q[h][c] / cnt[c];
            }
        }
    }

    maps.duration_s = loop.time() - t0;
    return maps;
}

UltrafastCurve ultrafast_iv(FeedbackLoop& loop, double x_nm, double y_nm,
                            const UltrafastConfig& cfg) {
    const LoopConfig& lc = loop.config();
    if (cfg.phase_bins < 8) throw std::invalid_argument("need at least 8 phase bins");
    if (cfg.n_periods < 1 || cfg.settle_s < 0.0)
        throw std::invalid_argument("averaging window must be positive");
    if (lc.source != FeedbackSource::inphase_fundamental)
        throw std::invalid_argument("sinusoidal-bias sweep regulates the demodulated fundamental");
    if (loop.bias() != 0.0)
        throw std::invalid_argument("sinusoidal-bias sweep needs the dc bias at zero");
    if (loop.modulation_vm() <= 0.0 || lc.mod.f_hz <= 0.0)
        throw std::invalid_argument("sinusoidal-bias sweep needs bias modulation");

    const double r_gain = lc.plant.preamp_r;
    const double vm = loop.modulation_vm();
    const int nb = cfg.phase_bins;
    // the quadrature estimate is junction-referred; put the sensing response
    // back on it so the subtraction happens in the frame the preamp recorded.
    // The same response gives the path group delay, which shifts the phase
    // every folded sample is labelled with
    const std::complex<double> h1 = loop.preamp_response(lc.mod.f_hz);
    const double h_mag = std::abs(h1);
    const double h_arg = std::arg(h1);

    const double t0 = loop.time();
    loop.engage_at(x_nm, y_nm);
    loop.run(cfg.settle_s);

    const long n_ticks = std::lround(cfg.n_periods / lc.mod.f_hz * loop.fs());
    std::vector<double> acc(nb, 0.0), acc_th(nb, 0.0);
    std::vector<long> cnt(nb, 0);
    double cap_acc = 0.0, gap_acc = 0.0;
    for (long i = 0; i < n_ticks; ++i) {
        const LoopSample s = loop.tick();
        const double i_cap = s.harmonics[0][1] / r_gain;
        const double theta = std::fmod(s.theta_mod, two_pi);
        const double i_corr = s.v_pre / r_gain - i_cap * h_mag * std::cos(theta + h_arg);
        const double th_fold = std::fmod(theta + h_arg + two_pi, two_pi);
        int bin = static_cast<int>(th_fold / two_pi * nb) % nb;
        if (bin < 0) bin += nb;
        acc[bin] += i_corr;
        acc_th[bin] += th_fold;
        ++cnt[bin];
        cap_acc += i_cap;
        gap_acc += s.gap_ang;
    }

    // when the sample rate is commensurate with the drive the samples sit at
    // fixed spots inside each bin, so report the bias at the phase centroid
    UltrafastCurve curve;
    curve.bias_v.resize(nb);
    curve.current_a.assign(nb, 0.0);
    std::vector<double> th(nb, 0.0);
    long n_filled = 0;
    for (int k = 0; k < nb; ++k) {
        th[k] = two_pi * (k + 0.5) / nb;
        if (cnt[k] > 0) {
            curve.current_a[k] = acc[k] / cnt[k];
            th[k] = acc_th[k] / cnt[k];
            ++n_filled;
        }
        curve.bias_v[k] = vm * std::sin(th[k]);
    }
    if (n_filled == 0) throw std::runtime_error("no phase bin received a sample");

    // the sample grid strides over the bins; fill the gaps from the nearest
    // filled phase neighbours
    for (int k = 0; k < nb; ++k) {
        if (cnt[k] > 0) continue;
        int prev = k, next = k;
        do prev = (prev + nb - 1) % nb;
        while (cnt[prev] == 0);
        do next = (next + 1) % nb;
        while (cnt[next] == 0);
        double dp = std::fmod(th[k] - th[prev] + two_pi, two_pi);
        double dn = std::fmod(th[next] - th[k] + two_pi, two_pi);
        curve.current_a[k] =
            (curve.current_a[prev] * dn + curve.current_a[next] * dp) / (dp + dn);
    }

    curve.i_cap_peak_a = cap_acc / n_ticks;
    curve.gap_ang = gap_acc / n_ticks;
    curve.settled = cfg.settle_s >= loop.lockin_settle_time_s() && !loop.crashed() &&
                    !loop.unstable();
    curve.duration_s = loop.time() - t0;
    return curve;
}

} // namespace stmlab::spectroscopy
