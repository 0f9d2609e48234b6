#include "stmlab/control.hpp"

#include "stmlab/junction.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <numbers>
#include <stdexcept>

namespace stmlab::control {

namespace {
constexpr double two_pi = 2.0 * std::numbers::pi;
}

double error_signal(double setpoint_a, double preamp_v, double preamp_r, double i_min_a) {
    if (setpoint_a <= 0.0 || preamp_r <= 0.0 || i_min_a <= 0.0)
        throw std::invalid_argument("setpoint, transimpedance and current floor must be positive");
    return std::log(setpoint_a * preamp_r) - std::log(std::max(preamp_v, preamp_r * i_min_a));
}

std::complex<double> LoopModel::pi(double ki, double f_hz) const {
    const double T = 1.0 / fs_hz;
    const std::complex<double> z = std::polar(1.0, two_pi * f_hz * T);
    return ki * (T / 2.0 * (z + 1.0) / (z - 1.0) + 1.0 / wc_rad);
}

std::complex<double> LoopModel::delay(double f_hz) const {
    return std::polar(1.0, -two_pi * f_hz / fs_hz);
}

std::complex<double> LoopModel::open_loop(double ki, double f_hz) const {
    return pi(ki, f_hz) * delay(f_hz) * plant(f_hz);
}

std::complex<double> LoopModel::imaging(double ki, double f_hz) const {
    if (f_hz == 0.0) return {1.0, 0.0};
    const std::complex<double> c = pi(ki, f_hz);
    const std::complex<double> l = c * delay(f_hz) * plant(f_hz);
    return c * sensing(f_hz) * (plant_dc / sensing_dc) / (1.0 + l);
}

LoopModel make_loop_model(const PlantConfig& plant, double phi_ev, double wc_rad, double fs_hz) {
    auto hp = std::make_shared<LinearSystem>(build_hp_path(plant));
    auto pre = std::make_shared<LinearSystem>(build_preamp_unity(plant));
    hp->discretize(fs_hz);
    pre->discretize(fs_hz);
    const double a = junction::k_gap_decay * std::sqrt(phi_ev);

    LoopModel m;
    m.plant = [hp, pre, a](double f) {
        return a * pre->discrete_response(f) * hp->discrete_response(f);
    };
    m.sensing = [pre, a](double f) { return a * pre->discrete_response(f); };
    m.plant_dc = std::abs(m.plant(0.0));
    m.sensing_dc = std::abs(m.sensing(0.0));
    m.wc_rad = wc_rad;
    m.fs_hz = fs_hz;
    return m;
}

CriticalGain critical_ki(const FrfFn& loop_per_unit_ki, double f_lo_hz, double f_hi_hz) {
    if (f_lo_hz <= 0.0 || f_hi_hz <= f_lo_hz) throw std::invalid_argument("bad frequency range");
    const int n = 4000;
    const double step = std::pow(f_hi_hz / f_lo_hz, 1.0 / n);
    CriticalGain best;
    double prev_f = f_lo_hz;
    std::complex<double> prev = loop_per_unit_ki(prev_f);
    for (int i = 1; i <= n; ++i) {
        const double f = f_lo_hz * std::pow(step, i);
        const std::complex<double> cur = loop_per_unit_ki(f);
        if ((prev.imag() > 0.0) != (cur.imag() > 0.0)) {
            double fa = prev_f, fb = f;
            std::complex<double> va = prev;
            for (int it = 0; it < 60 && fb - fa > 1e-10 * fb; ++it) {
                const double fm = std::sqrt(fa * fb);
                const std::complex<double> vm = loop_per_unit_ki(fm);
                if ((va.imag() > 0.0) != (vm.imag() > 0.0)) {
                    fb = fm;
                } else {
                    fa = fm;
                    va = vm;
                }
            }
            const double fx = std::sqrt(fa * fb);
            const std::complex<double> vx = loop_per_unit_ki(fx);
            if (vx.real() < 0.0) {
                const double k = 1.0 / std::abs(vx);
                if (!best.bounded || k < best.ki) {
                    best.ki = k;
                    best.f_crossover_hz = fx;
                }
                best.bounded = true;
            }
        }
        prev = cur;
        prev_f = f;
    }
    return best;
}

CriticalGain critical_ki(const LoopModel& m) {
    return critical_ki([&m](double f) { return m.open_loop(1.0, f); }, 10.0, 0.49 * m.fs_hz);
}

double imaging_bandwidth(const LoopModel& m, double ki) {
    const double target = 1.0 / std::sqrt(2.0);
    const double f_lo = 1e-3, f_hi = 0.49 * m.fs_hz;
    const int n = 2500;
    const double step = std::pow(f_hi / f_lo, 1.0 / n);
    double prev_f = f_lo;
    double prev_mag = std::abs(m.imaging(ki, prev_f));
    if (prev_mag < target) return f_lo;
    for (int i = 1; i <= n; ++i) {
        const double f = f_lo * std::pow(step, i);
        const double mag = std::abs(m.imaging(ki, f));
        if (mag < target && prev_mag >= target) {
            double fa = prev_f, fb = f;
            for (int it = 0; it < 60 && fb - fa > 1e-10 * fb; ++it) {
                const double fm = std::sqrt(fa * fb);
                if (std::abs(m.imaging(ki, fm)) >= target)
                    fa = fm;
                else
                    fb = fm;
            }
            return std::sqrt(fa * fb);
        }
        prev_f = f;
        prev_mag = mag;
    }
    return f_hi;
}

double imaging_peak_db(const LoopModel& m, double ki) {
    const double f_lo = 1.0, f_hi = 0.49 * m.fs_hz;
    const int n = 3000;
    const double step = std::pow(f_hi / f_lo, 1.0 / n);
    double best_f = f_lo, best = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double f = f_lo * std::pow(step, i);
        const double mag = std::abs(m.imaging(ki, f));
        if (mag > best) {
            best = mag;
            best_f = f;
        }
    }
    // refine around the coarse maximum
    double lo = best_f / step, hi = best_f * step;
    for (int round = 0; round < 3; ++round) {
        const double r = std::pow(hi / lo, 1.0 / 40);
        double loc_f = lo, loc = 0.0;
        for (int i = 0; i <= 40; ++i) {
            const double f = lo * std::pow(r, i);
            const double mag = std::abs(m.imaging(ki, f));
            if (mag > loc) {
                loc = mag;
                loc_f = f;
            }
        }
        best = std::max(best, loc);
        lo = loc_f / r;
        hi = loc_f * r;
    }
    return 20.0 * std::log10(best);
}

BandwidthGain bandwidth_ki(const LoopModel& m, double f_min_hz, double ki_limit) {
    BandwidthGain out;
    double hi = ki_limit;
    if (imaging_bandwidth(m, hi) < f_min_hz) {
        out.ki = hi;
        out.bw_hz = imaging_bandwidth(m, hi);
        out.ok = false;
        return out;
    }
    double lo = ki_limit * 1e-4;
    while (imaging_bandwidth(m, lo) >= f_min_hz && lo > ki_limit * 1e-9) lo *= 0.1;
    while (hi / lo > 1.005) {
        const double mid = std::sqrt(lo * hi);
        if (imaging_bandwidth(m, mid) >= f_min_hz)
            hi = mid;
        else
            lo = mid;
    }
    out.ki = hi;
    out.bw_hz = imaging_bandwidth(m, hi);
    out.ok = out.bw_hz >= f_min_hz && out.bw_hz <= 1.2 * f_min_hz;
    return out;
}

PeakGain hinf_ki(const LoopModel& m, double limit_db, double ki_limit) {
    PeakGain out;
    double hi = ki_limit;
    if (imaging_peak_db(m, hi) <= limit_db) {
        out.ki = hi;
        out.peak_db = imaging_peak_db(m, hi);
        out.ok = true;
        return out;
    }
    double lo = ki_limit * 1e-4;
    while (imaging_peak_db(m, lo) > limit_db && lo > ki_limit * 1e-9) lo *= 0.1;
    while (hi / lo > 1.005) {
        const double mid = std::sqrt(lo * hi);
        if (imaging_peak_db(m, mid) <= limit_db)
            lo = mid;
        else
            hi = mid;
    }
    out.ki = lo;
    out.peak_db = imaging_peak_db(m, lo);
    out.ok = std::abs(out.peak_db - limit_db) <= 0.1;
    return out;
}

DesignRegion design_region(const PlantConfig& plant, double phi_ev, double fs_hz,
                           const std::vector<double>& wc_list, double f_min_hz,
                           double peak_limit_db) {
    if (wc_list.empty()) throw std::invalid_argument("no proportional corners to sweep");
    DesignRegion reg;
    reg.f_min_hz = f_min_hz;
    reg.peak_limit_db = peak_limit_db;
    for (const double wc : wc_list) {
        const LoopModel m = make_loop_model(plant, phi_ev, wc, fs_hz);
        const CriticalGain crit = critical_ki(m);
        DesignPoint p;
        p.wc_rad = wc;
        p.ki_upper = crit.bounded ? crit.ki : std::numeric_limits<double>::infinity();
        p.f_crossover_hz = crit.f_crossover_hz;
        const double cap = crit.bounded ? 0.999 * crit.ki : 1e3;
        const PeakGain pk = hinf_ki(m, peak_limit_db, cap);
        p.ki_hinf = pk.ki;
        const BandwidthGain bw = bandwidth_ki(m, f_min_hz, cap);
        p.ki_lower = bw.ki;
        p.ki_recommended = 0.5 * std::min(p.ki_upper, p.ki_hinf);
        p.feasible = bw.ok && pk.ok && bw.ki <= pk.ki;
        reg.points.push_back(p);
        if (p.feasible) reg.feasible = true;
    }
    double best_bw = -1.0;
    for (const DesignPoint& p : reg.points) {
        if (!p.feasible) continue;
        const LoopModel m = make_loop_model(plant, phi_ev, p.wc_rad, fs_hz);
        const double b = imaging_bandwidth(m, p.ki_recommended);
        if (b > best_bw) {
            best_bw = b;
            reg.recommended_ki = p.ki_recommended;
            reg.recommended_wc = p.wc_rad;
        }
    }
    return reg;
}

void write_design_csv(const DesignRegion& region, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f << "omega_c,ki_upper,ki_lower,ki_hinf,ki_recommended\n";
    char buf[256];
    for (const DesignPoint& p : region.points) {
        std::snprintf(buf, sizeof buf, "%.12g,%.12g,%.12g,%.12g,%.12g\n", p.wc_rad, p.ki_upper,
                      p.ki_lower, p.ki_hinf, p.ki_recommended);
        f << buf;
    }
}

SimCheck simulate_loop(const LinearSystem& plant, double fs_hz, double ki, double wc_rad,
                       double r_step, double duration_s) {
    LinearLoop loop(plant, fs_hz, ki, wc_rad);
    loop.set_reference(r_step);
    const long n = std::lround(duration_s * fs_hz);
    const long tail = std::max<long>(1, std::lround(0.010 * fs_hz));
    std::vector<double> e(static_cast<std::size_t>(n));
    SimCheck c;
    for (long i = 0; i < n; ++i) {
        e[static_cast<std::size_t>(i)] = std::abs(loop.tick());
        c.max_abs_e = std::max(c.max_abs_e, e[static_cast<std::size_t>(i)]);
    }
    double tail_max = 0.0;
    for (long i = std::max<long>(0, n - tail); i < n; ++i)
        tail_max = std::max(tail_max, e[static_cast<std::size_t>(i)]);
    c.final_abs_e = e.empty() ? 0.0 : e.back();
    c.settled = tail_max < 0.01;
    c.diverged = tail_max > std::max(1.0, std::abs(r_step));
    return c;
}

SlopeEstimate lbh_gap_modulation(FeedbackLoop& loop, double amp_ang, double f_hz,
                                 double duration_s) {
    if (amp_ang <= 0.0 || f_hz <= 0.0) throw std::invalid_argument("bad dither parameters");
    const double fs = loop.fs();
    PhaseAccumulator ph(f_hz, fs);
    LockIn li({fs, f_hz / 10.0, 4, 0.0});
    const double amp_v = amp_ang / loop.config().plant.extension_gain();
    const long n = std::lround(duration_s * fs);
    for (long i = 0; i < n; ++i) {
        const double th = ph.advance();
        loop.set_injection(0.0, amp_v * std::sin(th));
        loop.tick();
        li.step(loop.probe_y2(), std::sin(th), std::cos(th));
    }
    loop.set_injection(0.0, 0.0);
    SlopeEstimate out;
    out.slope_per_ang = li.amplitude() / amp_ang;
    out.phi_ev = junction::barrier_from_slope(out.slope_per_ang);
    return out;
}

double lbh_dc_gain_ratio(FeedbackLoop& loop, double amp_v, double f_hz, double duration_s) {
    if (amp_v <= 0.0 || f_hz <= 0.0) throw std::invalid_argument("bad dither parameters");
    const double fs = loop.fs();
    PhaseAccumulator ph(f_hz, fs);
    LockIn l1({fs, f_hz / 10.0, 4, 0.0});
    LockIn l2({fs, f_hz / 10.0, 4, 0.0});
    const long n = std::lround(duration_s * fs);
    for (long i = 0; i < n; ++i) {
        const double th = ph.advance();
        const double s = std::sin(th), c = std::cos(th);
        loop.set_injection(0.0, amp_v * s);
        loop.tick();
        l1.step(loop.probe_y1(), s, c);
        l2.step(loop.probe_y2(), s, c);
    }
    loop.set_injection(0.0, 0.0);
    if (l1.amplitude() <= 0.0) throw std::runtime_error("no drive excitation measured");
    return l2.amplitude() / l1.amplitude();
}

PiGains adapt_gains(const PiGains& gains, double estimated_gain, double desired_gain) {
    if (estimated_gain <= 0.0 || desired_gain <= 0.0)
        throw std::invalid_argument("gain estimates must be positive");
    return {gains.ki * desired_gain / estimated_gain, gains.wc_rad};
}

} // namespace stmlab::control
