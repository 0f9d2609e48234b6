#pragma once

#include "stmlab/linear_system.hpp"

#include <complex>
#include <cstddef>
#include <vector>

namespace stmlab {

/// Running phase of a sine reference, wrapped to [0, 2pi).
class PhaseAccumulator {
public:
    PhaseAccumulator(double freq_hz, double fs_hz);
    double advance(); // returns the phase used for the current sample
    double phase() const { return theta_; }
    void set_frequency(double freq_hz);
    double frequency() const;

private:
    double theta_ = 0.0;
    double dtheta_ = 0.0;
    double fs_ = 0.0;
};

/// sin(k theta), cos(k theta) for k = 0..n from sin/cos of theta
void harmonic_refs(double sin1, double cos1, int n, double* sins, double* coss);

/// Dual-phase demodulator with a Butterworth post-filter per channel. The
/// caller supplies reference sin/cos already at the tracked harmonic; the x2
/// recovers the amplitude of a pure sine input. An optional complex
/// compensation divides the estimate by a known signal-path response.
class LockIn {
public:
    struct Config {
        double fs_hz = 0.0;
        double cutoff_hz = 500.0;
        int order = 4;
        double phase_offset_rad = 0.0;
    };

    explicit LockIn(const Config& cfg);

    void set_compensation(std::complex<double> path_response);
    void step(double sample, double ref_sin, double ref_cos);
    void reset();
    /// start from a known steady reading instead of spinning up from zero;
    /// the values are the raw demodulated components before compensation
    void preload(double raw_in_phase, double raw_quadrature);

    /// component of the input along ref_sin
    double in_phase() const { return xi_; }
    /// component along ref_cos
    double quadrature() const { return xq_; }
    double amplitude() const;
    double phase() const;
    bool settled() const { return samples_ >= settle_samples_; }
    double settle_time_s() const;

private:
    LinearSystem lpf_i_, lpf_q_;
    std::complex<double> comp_inv_{1.0, 0.0};
    std::complex<double> phase_rot_{1.0, 0.0};
    double raw_i_ = 0.0, raw_q_ = 0.0;
    double xi_ = 0.0, xq_ = 0.0;
    long samples_ = 0;
    long settle_samples_ = 0;
    double fs_ = 0.0;
    double cutoff_hz_ = 0.0;
};

/// Logarithmic sine sweep; rate is octaves per second.
class SweptSine {
public:
    struct Config {
        double f_start_hz = 10.0;
        double f_end_hz = 1e4;
        double octaves_per_s = 1.0;
        double amplitude = 1.0;
        double fs_hz = 0.0;
    };

    explicit SweptSine(const Config& cfg);
    double step();
    double frequency() const { return f_; }
    bool done() const { return done_; }

private:
    Config cfg_;
    double f_ = 0.0;
    double theta_ = 0.0;
    bool done_ = false;
};

/// Cascade of discrete notches used to pull piezo resonances out of a signal.
class NotchBank {
public:
    struct Config {
        double fs_hz = 0.0;
        std::vector<double> freqs_hz;
        double q = 5.0;
    };

    NotchBank() = default;
    explicit NotchBank(const Config& cfg);

    double step(double x);
    void reset();
    void preload_dc(double level);
    /// superpose the periodic steady state of a sinusoidal input component
    void add_tone(double theta, std::complex<double> input);
    bool empty() const { return filters_.empty(); }
    std::complex<double> response(double f_hz) const;

private:
    std::vector<LinearSystem> filters_;
};

/// RMS over a sliding window of the last n samples.
class MovingRms {
public:
    explicit MovingRms(std::size_t window);
    void push(double x);
    double value() const;
    bool full() const { return count_ >= buf_.size(); }
    void reset();

private:
    std::vector<double> buf_;
    std::size_t head_ = 0;
    std::size_t count_ = 0;
    double sumsq_ = 0.0;
    std::size_t refresh_countdown_ = 0;
};

} // namespace stmlab
