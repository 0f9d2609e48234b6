#include "stmlab/sysid.hpp"

#include "stmlab/loop.hpp"

#include <json.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace stmlab::sysid {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

/// Pole basis used while iterating: conjugate pairs are stored once with
/// positive imaginary part, real poles separately. Each pair carries two real
/// coefficients, each real pole one, so every linear solve stays real.
struct PoleSet {
    std::vector<std::complex<double>> pairs;
    std::vector<double> reals;
    int order() const { return static_cast<int>(2 * pairs.size() + reals.size()); }
};

void basis_row(const PoleSet& ps, std::complex<double> s, std::vector<std::complex<double>>& phi) {
    phi.clear();
    for (const auto& p : ps.pairs) {
        const std::complex<double> u = 1.0 / (s - p);
        const std::complex<double> v = 1.0 / (s - std::conj(p));
        phi.push_back(u + v);
        phi.push_back(std::complex<double>(0.0, 1.0) * (u - v));
    }
    for (double p : ps.reals) phi.push_back(1.0 / (s - std::complex<double>(p, 0.0)));
}

PoleSet initial_poles(const std::vector<FrfPoint>& pts, int n_poles) {
    double f_lo = std::numeric_limits<double>::max();
    double f_hi = 0.0;
    for (const auto& p : pts) {
        f_lo = std::min(f_lo, p.f_hz);
        f_hi = std::max(f_hi, p.f_hz);
    }
    PoleSet ps;
    const int n_pairs = n_poles / 2;
    for (int k = 0; k < n_pairs; ++k) {
        const double frac = n_pairs == 1 ? 0.5 : static_cast<double>(k) / (n_pairs - 1);
        const double w = two_pi * f_lo * std::pow(f_hi / f_lo, frac);
        ps.pairs.emplace_back(-0.01 * w, w);
    }
    if (n_poles % 2) ps.reals.push_back(-two_pi * std::sqrt(f_lo * f_hi));
    return ps;
}

PoleSet relocate(const PoleSet& ps, const Eigen::VectorXd& sigma_coeffs) {
    const int n = ps.order();
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    int idx = 0;
    for (const auto& p : ps.pairs) {
        a(idx, idx) = p.real();
        a(idx, idx + 1) = p.imag();
        a(idx + 1, idx) = -p.imag();
        a(idx + 1, idx + 1) = p.real();
        b(idx) = 2.0;
        idx += 2;
    }
    for (double p : ps.reals) {
        a(idx, idx) = p;
        b(idx) = 1.0;
        ++idx;
    }

    const Eigen::MatrixXd h = a - b * sigma_coeffs.transpose();
    const Eigen::EigenSolver<Eigen::MatrixXd> es(h);

    PoleSet out;
    for (int i = 0; i < n; ++i) {
        std::complex<double> e = es.eigenvalues()[i];
        if (e.real() > 0.0) e = std::complex<double>(-e.real(), e.imag());
        if (std::abs(e.imag()) < 1e-8 * std::abs(e))
            out.reals.push_back(e.real());
        else if (e.imag() > 0.0)
            out.pairs.push_back(e);
    }
    while (out.order() < n) out.reals.push_back(-two_pi * 100.0);
    return out;
}

} // namespace

std::vector<double> frf_grid(const FrfConfig& cfg) {
    if (cfg.f_lo_hz <= 0.0 || cfg.f_hi_hz <= cfg.f_lo_hz)
        throw std::invalid_argument("frequency band must satisfy 0 < f_lo < f_hi");
    if (cfg.n_points < 2) throw std::invalid_argument("need at least two grid points");
    std::vector<double> f(cfg.n_points);
    for (int i = 0; i < cfg.n_points; ++i)
        f[i] = cfg.f_lo_hz *
               std::pow(cfg.f_hi_hz / cfg.f_lo_hz, static_cast<double>(i) / (cfg.n_points - 1));
    return f;
}

std::vector<FrfPoint> coherent_points(const std::vector<FrfPoint>& pts, double min_coherence) {
    std::vector<FrfPoint> out;
    for (const auto& p : pts)
        if (p.coherence >= min_coherence) out.push_back(p);
    return out;
}

std::vector<FrfPoint> compensate_delay(std::vector<FrfPoint> pts, double delay_s) {
    for (auto& p : pts) {
        const std::complex<double> rot = std::polar(1.0, two_pi * p.f_hz * delay_s);
        p.g *= rot;
        p.g_alt *= rot;
    }
    return pts;
}

std::complex<double> RationalModel::response(double f_hz) const {
    const std::complex<double> s(0.0, two_pi * f_hz);
    std::complex<double> h(direct, 0.0);
    for (std::size_t i = 0; i < poles.size(); ++i) h += residues[i] / (s - poles[i]);
    return h;
}

RationalModel fit_rational(const std::vector<FrfPoint>& pts, int n_poles, int n_iterations) {
    if (n_poles < 1) throw std::invalid_argument("fit order must be at least 1");
    if (n_iterations < 1) throw std::invalid_argument("need at least one relocation pass");
    if (2 * pts.size() < static_cast<std::size_t>(2 * n_poles + 1))
        throw std::invalid_argument("not enough frequency points for the requested order");

    // weight every row by 1/|g| so the fit tracks relative error; otherwise
    // resonance peaks dominate the solve and the rolloff tail is ignored
    std::vector<double> wgt;
    wgt.reserve(pts.size());
    for (const auto& p : pts) wgt.push_back(1.0 / std::max(std::abs(p.g), 1e-30));

    const int m = n_poles;
    const long rows = static_cast<long>(2 * pts.size());
    PoleSet ps = initial_poles(pts, n_poles);
    std::vector<std::complex<double>> phi;

    for (int it = 0; it < n_iterations; ++it) {
        Eigen::MatrixXd mat(rows, 2 * m + 1);
        Eigen::VectorXd rhs(rows);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const std::complex<double> s(0.0, two_pi * pts[i].f_hz);
            const std::complex<double> h = pts[i].g;
            const double w = wgt[i];
            basis_row(ps, s, phi);
            for (int j = 0; j < m; ++j) {
                mat(2 * i, j) = w * phi[j].real();
                mat(2 * i + 1, j) = w * phi[j].imag();
                const std::complex<double> hp = -h * phi[j];
                mat(2 * i, m + 1 + j) = w * hp.real();
                mat(2 * i + 1, m + 1 + j) = w * hp.imag();
            }
            mat(2 * i, m) = w;
            mat(2 * i + 1, m) = 0.0;
            rhs(2 * i) = w * h.real();
            rhs(2 * i + 1) = w * h.imag();
        }
        const Eigen::VectorXd x = mat.colPivHouseholderQr().solve(rhs);
        ps = relocate(ps, x.segment(m + 1, m));
    }

    Eigen::MatrixXd mat(rows, m + 1);
    Eigen::VectorXd rhs(rows);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const std::complex<double> s(0.0, two_pi * pts[i].f_hz);
        const std::complex<double> h = pts[i].g;
        const double w = wgt[i];
        basis_row(ps, s, phi);
        for (int j = 0; j < m; ++j) {
            mat(2 * i, j) = w * phi[j].real();
            mat(2 * i + 1, j) = w * phi[j].imag();
        }
        mat(2 * i, m) = w;
        mat(2 * i + 1, m) = 0.0;
        rhs(2 * i) = w * h.real();
        rhs(2 * i + 1) = w * h.imag();
    }
    const Eigen::VectorXd x = mat.colPivHouseholderQr().solve(rhs);

    RationalModel model;
    int idx = 0;
    for (const auto& p : ps.pairs) {
        const std::complex<double> r(x(idx), x(idx + 1));
        model.poles.push_back(p);
        model.residues.push_back(r);
        model.poles.push_back(std::conj(p));
        model.residues.push_back(std::conj(r));
        idx += 2;
    }
    for (double p : ps.reals) {
        model.poles.emplace_back(p, 0.0);
        model.residues.emplace_back(x(idx), 0.0);
        ++idx;
    }
    model.direct = x(m);
    return model;
}

double rmse_db(const RationalModel& model, const std::vector<FrfPoint>& pts) {
    double acc = 0.0;
    int n = 0;
    for (const auto& p : pts) {
        const double gm = std::abs(p.g);
        const double hm = std::abs(model.response(p.f_hz));
        if (gm <= 0.0 || hm <= 0.0) continue;
        const double d = 20.0 * std::log10(hm / gm);
        acc += d * d;
        ++n;
    }
    if (n == 0) throw std::invalid_argument("no usable points for the error figure");
    return std::sqrt(acc / n);
}

void write_frf_csv(const std::vector<FrfPoint>& pts, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << "f_hz,re,im,coherence\n";
    char buf[160];
    for (const auto& p : pts) {
        std::snprintf(buf, sizeof buf, "%.12g,%.12g,%.12g,%.12g\n", p.f_hz, p.g.real(), p.g.imag(),
                      p.coherence);
        f << buf;
    }
}

std::vector<FrfPoint> read_frf_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(f, line) || line != "f_hz,re,im,coherence")
        throw std::runtime_error("unexpected header in " + path);
    std::vector<FrfPoint> out;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        FrfPoint p;
        double re = 0.0, im = 0.0;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf", &p.f_hz, &re, &im, &p.coherence) != 4)
            throw std::runtime_error("bad row in " + path + ": " + line);
        p.g = {re, im};
        p.g_alt = p.g;
        out.push_back(p);
    }
    return out;
}

void write_frf_json(const std::vector<FrfPoint>& pts, const std::string& path) {
    nlohmann::ordered_json j;
    j["points"] = nlohmann::ordered_json::array();
    for (const auto& p : pts) {
        j["points"].push_back({{"f_hz", p.f_hz},
                               {"re", p.g.real()},
                               {"im", p.g.imag()},
                               {"re_alt", p.g_alt.real()},
                               {"im_alt", p.g_alt.imag()},
                               {"coherence", p.coherence}});
    }
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << j.dump(1) << '\n';
}

std::vector<FrfPoint> read_frf_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    nlohmann::json j;
    f >> j;
    std::vector<FrfPoint> out;
    for (const auto& e : j.at("points")) {
        FrfPoint p;
        p.f_hz = e.at("f_hz").get<double>();
        p.g = {e.at("re").get<double>(), e.at("im").get<double>()};
        p.g_alt = {e.value("re_alt", p.g.real()), e.value("im_alt", p.g.imag())};
        p.coherence = e.at("coherence").get<double>();
        out.push_back(p);
    }
    return out;
}

RolloffResult demod_channel_rolloff(FeedbackLoop& loop, const std::vector<double>& probe_freqs_hz,
                                    double drive_amplitude_v) {
    if (probe_freqs_hz.size() < 2)
        throw std::invalid_argument("need at least two probe frequencies");
    if (loop.config().lockins.harmonics < 1)
        throw std::invalid_argument("loop has no demodulator to probe");
    if (drive_amplitude_v <= 0.0) throw std::invalid_argument("drive amplitude must be positive");

    const double fs = loop.fs();
    RolloffResult res;
    for (double f : probe_freqs_hz) {
        if (f <= 0.0 || f >= 0.5 * fs)
            throw std::invalid_argument("probe frequency outside (0, fs/2)");
        const double fc = std::clamp(f / 10.0, 2.0, 200.0);

        // ac-couple the probe demodulator around the channel's dc level
        loop.set_injection(0.0, 0.0);
        const long ring_n = std::lround(0.02 * fs);
        const long base_n = std::lround(0.01 * fs);
        double dc = 0.0;
        for (long i = 0; i < ring_n + base_n; ++i) {
            loop.tick();
            if (i >= ring_n) dc += loop.last_sample().harmonics[0][0];
        }
        dc /= base_n;

        PhaseAccumulator ph(f, fs);
        LockIn::Config lc;
        lc.fs_hz = fs;
        lc.cutoff_hz = fc;
        LockIn probe(lc);
        const long settle_n = std::lround(10.0 / (two_pi * fc) * fs);
        const long dwell_n = std::lround(std::max(10.0 / (two_pi * fc), 20.0 / f) * fs);
        double acc_i = 0.0, acc_q = 0.0;
        long n = 0;
        for (long i = 0; i < settle_n + dwell_n; ++i) {
            const double th = ph.advance();
            const double rs = std::sin(th), rc = std::cos(th);
            loop.set_injection(0.0, drive_amplitude_v * rs);
            loop.tick();
            probe.step(loop.last_sample().harmonics[0][0] - dc, rs, rc);
            if (i >= settle_n) {
                acc_i += probe.in_phase();
                acc_q += probe.quadrature();
                ++n;
            }
        }
        loop.set_injection(0.0, 0.0);
        res.points.push_back({f, std::hypot(acc_i / n, acc_q / n)});
    }

    const double target = res.points.front().amplitude / std::sqrt(2.0);
    for (std::size_t i = 1; i < res.points.size(); ++i) {
        if (res.points[i].amplitude <= target && res.points[i - 1].amplitude > target) {
            const double x0 = std::log(res.points[i - 1].f_hz);
            const double x1 = std::log(res.points[i].f_hz);
            const double y0 = std::log(res.points[i - 1].amplitude);
            const double y1 = std::log(res.points[i].amplitude);
            const double t = (std::log(target) - y0) / (y1 - y0);
            res.f3db_hz = std::exp(x0 + t * (x1 - x0));
            break;
        }
    }
    if (res.f3db_hz == 0.0)
        throw std::runtime_error("response never crossed -3 dB inside the probe grid");
    return res;
}

} // namespace stmlab::sysid
