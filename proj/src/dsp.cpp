#include "stmlab/dsp.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace stmlab {

namespace {
constexpr double two_pi = 2.0 * std::numbers::pi;
}

PhaseAccumulator::PhaseAccumulator(double freq_hz, double fs_hz) : fs_(fs_hz) {
    if (fs_hz <= 0.0) throw std::invalid_argument("sample rate must be positive");
    set_frequency(freq_hz);
}

void PhaseAccumulator::set_frequency(double freq_hz) {
    if (freq_hz < 0.0 || freq_hz >= fs_ / 2.0)
        throw std::invalid_argument("reference frequency must sit below Nyquist");
    dtheta_ = two_pi * freq_hz / fs_;
}

double PhaseAccumulator::frequency() const { return dtheta_ * fs_ / two_pi; }

double PhaseAccumulator::advance() {
    const double out = theta_;
    theta_ += dtheta_;
    if (theta_ >= two_pi) theta_ -= two_pi;
    return out;
}

void harmonic_refs(double sin1, double cos1, int n, double* sins, double* coss) {
    sins[0] = 0.0;
    coss[0] = 1.0;
    for (int k = 1; k <= n; ++k) {
        sins[k] = sins[k - 1] * cos1 + coss[k - 1] * sin1;
        coss[k] = coss[k - 1] * cos1 - sins[k - 1] * sin1;
    }
}

LockIn::LockIn(const Config& cfg)
    : lpf_i_(LinearSystem::butterworth_lowpass(cfg.order, cfg.cutoff_hz)),
      lpf_q_(LinearSystem::butterworth_lowpass(cfg.order, cfg.cutoff_hz)),
      fs_(cfg.fs_hz),
      cutoff_hz_(cfg.cutoff_hz) {
    if (cfg.fs_hz <= 0.0) throw std::invalid_argument("sample rate must be positive");
    if (cfg.cutoff_hz <= 0.0 || cfg.cutoff_hz >= cfg.fs_hz / 2.0)
        throw std::invalid_argument("lock-in cutoff must sit below Nyquist");
    lpf_i_.discretize(fs_);
    lpf_q_.discretize(fs_);
    settle_samples_ = static_cast<long>(std::ceil(settle_time_s() * fs_));
    if (cfg.phase_offset_rad != 0.0) phase_rot_ = std::polar(1.0, -cfg.phase_offset_rad);
}

double LockIn::settle_time_s() const { return 10.0 / (two_pi * cutoff_hz_); }

void LockIn::set_compensation(std::complex<double> path_response) {
    if (std::abs(path_response) <= 0.0) throw std::invalid_argument("compensation response must be nonzero");
    comp_inv_ = 1.0 / path_response;
}

void LockIn::step(double sample, double ref_sin, double ref_cos) {
    raw_i_ = lpf_i_.step(2.0 * sample * ref_sin);
    raw_q_ = lpf_q_.step(2.0 * sample * ref_cos);
    const std::complex<double> z = std::complex<double>(raw_i_, raw_q_) * comp_inv_ * phase_rot_;
    xi_ = z.real();
    xq_ = z.imag();
    ++samples_;
}

void LockIn::reset() {
    lpf_i_.reset();
    lpf_q_.reset();
    raw_i_ = raw_q_ = xi_ = xq_ = 0.0;
    samples_ = 0;
}

void LockIn::preload(double raw_in_phase, double raw_quadrature) {
    raw_i_ = lpf_i_.preload_dc(raw_in_phase);
    raw_q_ = lpf_q_.preload_dc(raw_quadrature);
    const std::complex<double> z = std::complex<double>(raw_i_, raw_q_) * comp_inv_ * phase_rot_;
    xi_ = z.real();
    xq_ = z.imag();
    samples_ = settle_samples_;
}

double LockIn::amplitude() const { return std::hypot(xi_, xq_); }

double LockIn::phase() const { return std::atan2(xq_, xi_); }

SweptSine::SweptSine(const Config& cfg) : cfg_(cfg), f_(cfg.f_start_hz) {
    if (cfg.fs_hz <= 0.0 || cfg.f_start_hz <= 0.0 || cfg.f_end_hz < cfg.f_start_hz ||
        cfg.octaves_per_s <= 0.0)
        throw std::invalid_argument("sweep needs fs > 0, 0 < f_start <= f_end, rate > 0");
    if (cfg.f_end_hz >= cfg.fs_hz / 2.0)
        throw std::invalid_argument("sweep end frequency must sit below Nyquist");
}

double SweptSine::step() {
    const double out = cfg_.amplitude * std::sin(theta_);
    theta_ += two_pi * f_ / cfg_.fs_hz;
    if (theta_ >= two_pi) theta_ -= two_pi;
    if (!done_ && cfg_.f_end_hz > cfg_.f_start_hz) {
        f_ *= std::exp2(cfg_.octaves_per_s / cfg_.fs_hz);
        if (f_ >= cfg_.f_end_hz) {
            f_ = cfg_.f_end_hz;
            done_ = true;
        }
    }
    return out;
}

NotchBank::NotchBank(const Config& cfg) {
    for (double f : cfg.freqs_hz) {
        LinearSystem n = LinearSystem::notch(f, cfg.q);
        n.discretize(cfg.fs_hz);
        filters_.push_back(std::move(n));
    }
}

double NotchBank::step(double x) {
    for (auto& f : filters_) x = f.step(x);
    return x;
}

void NotchBank::reset() {
    for (auto& f : filters_) f.reset();
}

void NotchBank::preload_dc(double level) {
    for (auto& f : filters_) f.preload_dc(level);
}

void NotchBank::add_tone(double theta, std::complex<double> input) {
    for (auto& f : filters_) input = f.add_tone(theta, input);
}

std::complex<double> NotchBank::response(double f_hz) const {
    std::complex<double> h(1.0, 0.0);
    for (const auto& f : filters_) h *= f.discrete_response(f_hz);
    return h;
}

MovingRms::MovingRms(std::size_t window) : buf_(window, 0.0) {
    if (window == 0) throw std::invalid_argument("window must be nonempty");
    refresh_countdown_ = 64 * window;
}

void MovingRms::push(double x) {
    sumsq_ += x * x - buf_[head_] * buf_[head_];
    buf_[head_] = x;
    head_ = (head_ + 1) % buf_.size();
    if (count_ < buf_.size()) ++count_;
    if (--refresh_countdown_ == 0) { // keep the running sum from drifting
        refresh_countdown_ = 64 * buf_.size();
        sumsq_ = 0.0;
        for (double v : buf_) sumsq_ += v * v;
    }
}

double MovingRms::value() const {
    if (count_ == 0) return 0.0;
    return std::sqrt(std::max(0.0, sumsq_) / static_cast<double>(count_));
}

void MovingRms::reset() {
    std::fill(buf_.begin(), buf_.end(), 0.0);
    head_ = count_ = 0;
    sumsq_ = 0.0;
    refresh_countdown_ = 64 * buf_.size();
}

} // namespace stmlab
