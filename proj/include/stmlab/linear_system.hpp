#pragma once

#include <array>
#include <complex>
#include <vector>

namespace stmlab {

/// One discretized second-order stage in transposed direct form II.
/// Coefficients are in negative powers of z, a0 normalized to 1.
struct Biquad {
    double b0 = 1.0, b1 = 0.0, b2 = 0.0;
    double a1 = 0.0, a2 = 0.0;
    double s1 = 0.0, s2 = 0.0;

    double step(double x) {
        const double y = b0 * x + s1;
        s1 = b1 * x - a1 * y + s2;
        s2 = b2 * x - a2 * y;
        return y;
    }

    void reset() { s1 = s2 = 0.0; }

    std::complex<double> response(double theta) const;
};

/// Continuous-time section of order <= 2,
///   (num[0] + num[1] s + num[2] s^2) / (den[0] + den[1] s + den[2] s^2).
/// prewarp_w picks the frequency (rad/s) mapped exactly under the bilinear
/// transform; 0 means the plain trapezoidal substitution.
struct ContinuousSection {
    std::array<double, 3> num{0.0, 0.0, 0.0};
    std::array<double, 3> den{1.0, 0.0, 0.0};
    double prewarp_w = 0.0;

    std::complex<double> response(std::complex<double> s) const;
};

/// Cascade of continuous-time sections with an overall gain. Discretization
/// produces a per-section bilinear map, each section prewarped at its own
/// frequency when that frequency sits safely below Nyquist; corner frequencies
/// at or beyond Nyquist fall back to the plain trapezoidal map, whose z = -1
/// numerator zero supplies the correct high-frequency phase roll.
///
/// The biquad cascade doubles as the cached discrete realization: its internal
/// s1/s2 registers form the state vector of a structured state-space model.
class LinearSystem {
public:
    LinearSystem() = default;
    explicit LinearSystem(double gain) : gain_(gain) {}

    // --- factories -------------------------------------------------------
    static LinearSystem identity() { return LinearSystem(1.0); }
    static LinearSystem gain_block(double k) { return LinearSystem(k); }
    static LinearSystem integrator();
    static LinearSystem first_order_lowpass(double corner_hz, double dc_gain = 1.0);
    static LinearSystem resonant_mode(double w0_rad, double zeta, double dc_gain = 1.0);
    static LinearSystem notch(double f0_hz, double q);
    static LinearSystem butterworth_lowpass(int order, double cutoff_hz);
    /// C(s) = ki (1/s + 1/wc): integral gain ki, corner wc rad/s
    static LinearSystem pi(double ki, double wc_rad);
    /// Build from explicit roots. Complex values must come in conjugate pairs;
    /// the number of zeros must not exceed the number of poles.
    static LinearSystem from_zpk(const std::vector<std::complex<double>>& zeros,
                                 const std::vector<std::complex<double>>& poles,
                                 double gain);

    // --- composition ------------------------------------------------------
    LinearSystem& operator*=(const LinearSystem& rhs);
    friend LinearSystem operator*(LinearSystem lhs, const LinearSystem& rhs) {
        lhs *= rhs;
        return lhs;
    }
    void scale_gain(double k) { gain_ *= k; }

    // --- analysis ---------------------------------------------------------
    std::complex<double> response(double f_hz) const;
    std::complex<double> response_s(std::complex<double> s) const;
    double dc_gain() const;
    std::vector<std::complex<double>> poles() const;
    std::vector<std::complex<double>> zeros() const;
    double gain() const { return gain_; }
    int order() const;
    bool stable() const;

    // --- discrete side ----------------------------------------------------
    void discretize(double fs_hz);
    bool discretized() const { return fs_hz_ > 0.0; }
    double fs() const { return fs_hz_; }
    /// frequency response of the discretized cascade at f_hz
    std::complex<double> discrete_response(double f_hz) const;
    double step(double x);
    void reset();
    /// put every stage at its steady state for a constant input; returns the
    /// corresponding output
    double preload_dc(double input);
    /// superpose the periodic steady state for a sinusoidal input
    /// Re(input e^{j theta k}), with k = 0 at the next step() call; returns
    /// the output phasor
    std::complex<double> add_tone(double theta, std::complex<double> input);

    const std::vector<ContinuousSection>& sections() const { return sections_; }
    const std::vector<Biquad>& stages() const { return stages_; }
    void add_section(const ContinuousSection& sec) { sections_.push_back(sec); }

private:
    std::vector<ContinuousSection> sections_;
    double gain_ = 1.0;
    std::vector<Biquad> stages_;
    double fs_hz_ = 0.0;
};

/// Roots of c[0] + c[1] x + c[2] x^2 (degenerate orders handled).
std::vector<std::complex<double>> quadratic_roots(const std::array<double, 3>& c);

} // namespace stmlab
