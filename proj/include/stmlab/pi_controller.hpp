#pragma once

namespace stmlab {

/// Discrete PI regulator, C(s) = ki (1/s + 1/wc), trapezoidal integral.
/// The integrator freezes while the output is clamped.
class PiController {
public:
    struct Config {
        double ki = 0.0;
        double wc_rad = 0.0;
        double fs_hz = 0.0;
        double u_min = -10.0;
        double u_max = 10.0;
    };

    explicit PiController(const Config& cfg);

    double step(double e);
    void reset();
    /// set the integrator so the output equals u while the error is zero
    void preload(double u);
    /// retune without a jump in the held output
    void set_ki(double ki);

    double ki() const { return cfg_.ki; }
    double wc() const { return cfg_.wc_rad; }
    bool saturated() const { return saturated_; }
    double output() const { return u_; }

private:
    Config cfg_;
    double integral_ = 0.0;
    double e_prev_ = 0.0;
    double u_ = 0.0;
    bool saturated_ = false;
};

} // namespace stmlab
