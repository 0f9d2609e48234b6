#include "stmlab/linear_system.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace stmlab {

namespace {
constexpr double pi_v = std::numbers::pi;

std::complex<double> eval3(const std::array<double, 3>& c, std::complex<double> x) {
    return c[0] + x * (c[1] + x * c[2]);
}

int degree(const std::array<double, 3>& c) {
    if (c[2] != 0.0) return 2;
    if (c[1] != 0.0) return 1;
    return 0;
}
} // namespace

std::complex<double> Biquad::response(double theta) const {
    const std::complex<double> zi = std::polar(1.0, -theta);
    return (b0 + zi * (b1 + zi * b2)) / (1.0 + zi * (a1 + zi * a2));
}

std::complex<double> ContinuousSection::response(std::complex<double> s) const {
    return eval3(num, s) / eval3(den, s);
}

std::vector<std::complex<double>> quadratic_roots(const std::array<double, 3>& c) {
    std::vector<std::complex<double>> out;
    if (c[2] != 0.0) {
        const std::complex<double> disc = std::sqrt(std::complex<double>(c[1] * c[1] - 4.0 * c[2] * c[0], 0.0));
        // citardauq form for the root that would suffer cancellation
        const std::complex<double> q = -0.5 * (c[1] + (c[1] >= 0.0 ? disc : -disc));
        out.push_back(q / c[2]);
        if (std::abs(q) > 0.0)
            out.push_back(c[0] / q);
        else
            out.push_back(-q / c[2]);
    } else if (c[1] != 0.0) {
        out.emplace_back(-c[0] / c[1], 0.0);
    }
    return out;
}

LinearSystem LinearSystem::integrator() {
    LinearSystem sys;
    sys.sections_.push_back({{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, 0.0});
    return sys;
}

LinearSystem LinearSystem::first_order_lowpass(double corner_hz, double dc_gain) {
    if (corner_hz <= 0.0) throw std::invalid_argument("lowpass corner must be positive");
    const double wb = 2.0 * pi_v * corner_hz;
    LinearSystem sys;
    sys.sections_.push_back({{dc_gain, 0.0, 0.0}, {1.0, 1.0 / wb, 0.0}, wb});
    return sys;
}

LinearSystem LinearSystem::resonant_mode(double w0_rad, double zeta, double dc_gain) {
    if (w0_rad <= 0.0 || zeta <= 0.0) throw std::invalid_argument("resonant mode needs w0 > 0, zeta > 0");
    LinearSystem sys;
    sys.sections_.push_back({{dc_gain * w0_rad * w0_rad, 0.0, 0.0},
                             {w0_rad * w0_rad, 2.0 * zeta * w0_rad, 1.0},
                             w0_rad});
    return sys;
}

LinearSystem LinearSystem::notch(double f0_hz, double q) {
    if (f0_hz <= 0.0 || q <= 0.0) throw std::invalid_argument("notch needs f0 > 0, q > 0");
    const double w0 = 2.0 * pi_v * f0_hz;
    LinearSystem sys;
    sys.sections_.push_back({{w0 * w0, 0.0, 1.0}, {w0 * w0, w0 / q, 1.0}, w0});
    return sys;
}

LinearSystem LinearSystem::butterworth_lowpass(int order, double cutoff_hz) {
    if (order < 1 || cutoff_hz <= 0.0) throw std::invalid_argument("butterworth needs order >= 1, cutoff > 0");
    const double wc = 2.0 * pi_v * cutoff_hz;
    LinearSystem sys;
    for (int k = 0; k < order / 2; ++k) {
        const double theta = pi_v * (2.0 * k + order + 1.0) / (2.0 * order);
        const double zeta = -std::cos(theta);
        sys.sections_.push_back({{wc * wc, 0.0, 0.0}, {wc * wc, 2.0 * zeta * wc, 1.0}, wc});
    }
    if (order % 2 == 1)
        sys.sections_.push_back({{wc, 0.0, 0.0}, {wc, 1.0, 0.0}, wc});
    return sys;
}

LinearSystem LinearSystem::pi(double ki, double wc_rad) {
    if (wc_rad <= 0.0) throw std::invalid_argument("pi corner must be positive");
    LinearSystem sys;
    sys.sections_.push_back({{ki, ki / wc_rad, 0.0}, {0.0, 1.0, 0.0}, 0.0});
    return sys;
}

LinearSystem LinearSystem::from_zpk(const std::vector<std::complex<double>>& zeros,
                                    const std::vector<std::complex<double>>& poles,
                                    double gain) {
    if (zeros.size() > poles.size()) throw std::invalid_argument("improper system: more zeros than poles");

    struct Part {
        std::array<double, 3> poly;
        double wn;
        int deg;
    };
    auto split = [](const std::vector<std::complex<double>>& roots, const char* what) {
        std::vector<Part> second, first;
        std::vector<std::complex<double>> pending;
        for (const auto& r : roots) {
            if (std::abs(r.imag()) <= 1e-9 * std::max(1.0, std::abs(r))) {
                first.push_back({{-r.real(), 1.0, 0.0}, std::abs(r.real()), 1});
            } else {
                auto it = std::find_if(pending.begin(), pending.end(), [&](const std::complex<double>& p) {
                    return std::abs(p - std::conj(r)) <= 1e-9 * std::abs(r);
                });
                if (it == pending.end()) {
                    pending.push_back(r);
                    continue;
                }
                pending.erase(it);
                second.push_back({{std::norm(r), -2.0 * r.real(), 1.0}, std::abs(r), 2});
            }
        }
        if (!pending.empty()) throw std::invalid_argument(std::string(what) + ": complex roots must come in conjugate pairs");
        auto by_wn = [](const Part& a, const Part& b) { return a.wn < b.wn; };
        std::sort(second.begin(), second.end(), by_wn);
        std::sort(first.begin(), first.end(), by_wn);
        return std::pair{second, first};
    };

    auto [z2, z1] = split(zeros, "zeros");
    auto [p2, p1] = split(poles, "poles");

    // A conjugate zero pair cannot live in a first-order section, so when the
    // second-order pole sections run out, fuse two real poles into one.
    while (z2.size() > p2.size()) {
        if (p1.size() < 2) throw std::invalid_argument("cannot host conjugate zero pair in a proper section");
        const Part a = p1.back();
        p1.pop_back();
        const Part b = p1.back();
        p1.pop_back();
        const double p = -a.poly[0], q = -b.poly[0];
        p2.push_back({{p * q, -(p + q), 1.0}, std::sqrt(std::abs(p * q)), 2});
        std::sort(p2.begin(), p2.end(), [](const Part& x, const Part& y) { return x.wn < y.wn; });
    }

    LinearSystem sys;
    sys.gain_ = gain;
    std::size_t zi2 = 0, zi1 = 0;
    for (const auto& p : p2) {
        ContinuousSection sec{{1.0, 0.0, 0.0}, p.poly, p.wn > 0.0 ? p.wn : 0.0};
        if (zi2 < z2.size())
            sec.num = z2[zi2++].poly;
        else if (zi1 < z1.size())
            sec.num = z1[zi1++].poly;
        sys.sections_.push_back(sec);
    }
    for (const auto& p : p1) {
        ContinuousSection sec{{1.0, 0.0, 0.0}, p.poly, p.wn > 0.0 ? p.wn : 0.0};
        if (zi1 < z1.size()) sec.num = z1[zi1++].poly;
        sys.sections_.push_back(sec);
    }
    if (zi2 < z2.size() || zi1 < z1.size()) throw std::invalid_argument("unplaced zeros");
    return sys;
}

LinearSystem& LinearSystem::operator*=(const LinearSystem& rhs) {
    sections_.insert(sections_.end(), rhs.sections_.begin(), rhs.sections_.end());
    gain_ *= rhs.gain_;
    stages_.clear();
    fs_hz_ = 0.0;
    return *this;
}

std::complex<double> LinearSystem::response(double f_hz) const {
    return response_s(std::complex<double>(0.0, 2.0 * pi_v * f_hz));
}

std::complex<double> LinearSystem::response_s(std::complex<double> s) const {
    std::complex<double> h(gain_, 0.0);
    for (const auto& sec : sections_) h *= sec.response(s);
    return h;
}

double LinearSystem::dc_gain() const {
    double g = gain_;
    for (const auto& sec : sections_) {
        if (sec.den[0] == 0.0) return std::numeric_limits<double>::infinity();
        g *= sec.num[0] / sec.den[0];
    }
    return g;
}

std::vector<std::complex<double>> LinearSystem::poles() const {
    std::vector<std::complex<double>> out;
    for (const auto& sec : sections_)
        for (const auto& r : quadratic_roots(sec.den)) out.push_back(r);
    return out;
}

std::vector<std::complex<double>> LinearSystem::zeros() const {
    std::vector<std::complex<double>> out;
    for (const auto& sec : sections_)
        for (const auto& r : quadratic_roots(sec.num)) out.push_back(r);
    return out;
}

int LinearSystem::order() const {
    int n = 0;
    for (const auto& sec : sections_) n += degree(sec.den);
    return n;
}

bool LinearSystem::stable() const {
    for (const auto& p : poles())
        if (p.real() >= 0.0) return false;
    return true;
}

void LinearSystem::discretize(double fs_hz) {
    if (fs_hz <= 0.0) throw std::invalid_argument("sample rate must be positive");
    const double T = 1.0 / fs_hz;
    stages_.clear();
    stages_.reserve(sections_.size());
    for (const auto& sec : sections_) {
        double K = 2.0 / T;
        if (sec.prewarp_w > 0.0 && sec.prewarp_w * T / 2.0 < 0.98 * pi_v / 2.0)
            K = sec.prewarp_w / std::tan(sec.prewarp_w * T / 2.0);

        Biquad bq;
        if (degree(sec.den) == 2 || degree(sec.num) == 2) {
            const double a0 = sec.den[0] + sec.den[1] * K + sec.den[2] * K * K;
            if (a0 == 0.0) throw std::invalid_argument("section maps to singular discrete denominator");
            bq.b0 = (sec.num[0] + sec.num[1] * K + sec.num[2] * K * K) / a0;
            bq.b1 = (2.0 * sec.num[0] - 2.0 * sec.num[2] * K * K) / a0;
            bq.b2 = (sec.num[0] - sec.num[1] * K + sec.num[2] * K * K) / a0;
            bq.a1 = (2.0 * sec.den[0] - 2.0 * sec.den[2] * K * K) / a0;
            bq.a2 = (sec.den[0] - sec.den[1] * K + sec.den[2] * K * K) / a0;
        } else {
            const double a0 = sec.den[0] + sec.den[1] * K;
            if (a0 == 0.0) throw std::invalid_argument("section maps to singular discrete denominator");
            bq.b0 = (sec.num[0] + sec.num[1] * K) / a0;
            bq.b1 = (sec.num[0] - sec.num[1] * K) / a0;
            bq.a1 = (sec.den[0] - sec.den[1] * K) / a0;
        }
        stages_.push_back(bq);
    }
    fs_hz_ = fs_hz;
}

std::complex<double> LinearSystem::discrete_response(double f_hz) const {
    if (!discretized()) throw std::logic_error("discretize() before discrete_response()");
    const double theta = 2.0 * pi_v * f_hz / fs_hz_;
    std::complex<double> h(gain_, 0.0);
    for (const auto& st : stages_) h *= st.response(theta);
    return h;
}

double LinearSystem::step(double x) {
    if (!discretized() && !sections_.empty()) throw std::logic_error("discretize() before step()");
    double y = x;
    for (auto& st : stages_) y = st.step(y);
    return gain_ * y;
}

void LinearSystem::reset() {
    for (auto& st : stages_) st.reset();
}

double LinearSystem::preload_dc(double input) {
    if (!discretized() && !sections_.empty()) throw std::logic_error("discretize() before preload_dc()");
    double x = input;
    for (auto& st : stages_) {
        const double dden = 1.0 + st.a1 + st.a2;
        if (std::abs(dden) < 1e-12) throw std::invalid_argument("stage has no dc steady state");
        const double y = x * (st.b0 + st.b1 + st.b2) / dden;
        st.s1 = y - st.b0 * x;
        st.s2 = st.b2 * x - st.a2 * y;
        x = y;
    }
    return gain_ * x;
}

std::complex<double> LinearSystem::add_tone(double theta, std::complex<double> input) {
    if (!discretized() && !sections_.empty()) throw std::logic_error("discretize() before add_tone()");
    const std::complex<double> zi = std::polar(1.0, -theta);
    std::complex<double> x = input;
    for (auto& st : stages_) {
        const std::complex<double> y =
            x * (st.b0 + st.b1 * zi + st.b2 * zi * zi) / (1.0 + st.a1 * zi + st.a2 * zi * zi);
        const std::complex<double> s2 = (st.b2 * x - st.a2 * y) * zi;
        const std::complex<double> s1 = (st.b1 * x - st.a1 * y + s2) * zi;
        st.s1 += s1.real();
        st.s2 += s2.real();
        x = y;
    }
    return gain_ * x;
}

} // namespace stmlab
